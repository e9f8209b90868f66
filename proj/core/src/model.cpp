#include "vitfreeze/model.hpp"

#include <algorithm>
#include <cmath>

#include "vitfreeze/rng.hpp"

namespace vitfreeze {

namespace {

bool pow2_ratio(int64_t a, int64_t b) {  // a >= b, both positive
    if (a % b != 0) return false;
    int64_t q = a / b;
    return (q & (q - 1)) == 0;
}

int log2_ratio(int64_t a, int64_t b) {
    int n = 0;
    for (int64_t q = a / b; q > 1; q >>= 1) ++n;
    return n;
}

}  // namespace

int64_t ModelConfig::visible_count() const {
    const int64_t n = num_patches();
    return n - std::llround(mask_ratio * static_cast<double>(n));
}

void ModelConfig::validate() const {
    if (image_size < 1 || patch_size < 1 || image_size % patch_size != 0) {
        throw ConfigError("model: image_size " + std::to_string(image_size) +
                          " must be a positive multiple of patch_size " +
                          std::to_string(patch_size));
    }
    if (channels < 1) throw ConfigError("model.channels must be >= 1");
    if (num_blocks < 1) throw ConfigError("model.num_blocks must be >= 1");
    if (embed_dim < 4 || embed_dim % 4 != 0) {
        throw ConfigError("model.embed_dim must be a positive multiple of 4 (sin-cos table)");
    }
    if (decoder_dim < 4 || decoder_dim % 4 != 0) {
        throw ConfigError("model.decoder_dim must be a positive multiple of 4 (sin-cos table)");
    }
    if (num_heads < 1 || embed_dim % num_heads != 0) {
        throw ConfigError("model.num_heads must divide embed_dim");
    }
    if (decoder_heads < 1 || decoder_dim % decoder_heads != 0) {
        throw ConfigError("model.decoder_heads must divide decoder_dim");
    }
    if (mlp_ratio <= 0.0) throw ConfigError("model.mlp_ratio must be > 0");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
        throw ConfigError("model.mask_ratio must be in (0,1), got " + std::to_string(mask_ratio));
    }
    if (tap_layers.empty() || tap_layers.size() != supervision_scales.size()) {
        throw ConfigError("model: tap_layers and supervision_scales must be non-empty, equal-length lists");
    }
    for (size_t i = 0; i < tap_layers.size(); ++i) {
        if (tap_layers[i] < 1 || tap_layers[i] > num_blocks) {
            throw ConfigError("model.tap_layers entries must be in [1, num_blocks]");
        }
        if (i > 0 && tap_layers[i] <= tap_layers[i - 1]) {
            throw ConfigError("model.tap_layers must be strictly increasing");
        }
    }
    const int64_t g = grid_side();
    for (int64_t s : supervision_scales) {
        const bool ok = s >= g ? pow2_ratio(s, g) : pow2_ratio(g, s);
        if (s < 1 || !ok) {
            throw ConfigError("model: supervision scale " + std::to_string(s) +
                              " unreachable from token grid " + std::to_string(g) +
                              " by 2x steps");
        }
        if (image_size % s != 0) {
            throw ConfigError("model: supervision scale " + std::to_string(s) +
                              " must divide image_size for HOG cells");
        }
    }
    if (hog.num_bins < 2) throw ConfigError("model.hog_bins must be >= 2");
}

Tensor patchify(const Tensor& image, int64_t p) {
    if (image.rank() != 3) {
        throw ShapeError("patchify: expected [C,H,W], got " + shape_str(image.shape));
    }
    const int64_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (p < 1 || h % p != 0 || w % p != 0) {
        throw ShapeError("patchify: patch size " + std::to_string(p) + " does not divide " +
                         shape_str(image.shape));
    }
    const int64_t gh = h / p, gw = w / p;
    Tensor out({gh * gw, p * p * c});
    for (int64_t gi = 0; gi < gh; ++gi) {
        for (int64_t gj = 0; gj < gw; ++gj) {
            double* row = out.data.data() + (gi * gw + gj) * p * p * c;
            for (int64_t pi = 0; pi < p; ++pi) {
                for (int64_t pj = 0; pj < p; ++pj) {
                    for (int64_t k = 0; k < c; ++k) {
                        row[(pi * p + pj) * c + k] =
                            image.data[static_cast<size_t>(k * h * w + (gi * p + pi) * w +
                                                           (gj * p + pj))];
                    }
                }
            }
        }
    }
    return out;
}

Tensor unpatchify(const Tensor& patches, int64_t p, int64_t c, int64_t image_size) {
    if (patches.rank() != 2 || patches.shape[1] != p * p * c) {
        throw ShapeError("unpatchify: bad patch matrix " + shape_str(patches.shape));
    }
    const int64_t g = image_size / p;
    if (patches.shape[0] != g * g) {
        throw ShapeError("unpatchify: row count " + std::to_string(patches.shape[0]) +
                         " vs expected " + std::to_string(g * g));
    }
    Tensor out({c, image_size, image_size});
    for (int64_t gi = 0; gi < g; ++gi) {
        for (int64_t gj = 0; gj < g; ++gj) {
            const double* row = patches.data.data() + (gi * g + gj) * p * p * c;
            for (int64_t pi = 0; pi < p; ++pi) {
                for (int64_t pj = 0; pj < p; ++pj) {
                    for (int64_t k = 0; k < c; ++k) {
                        out.data[static_cast<size_t>(k * image_size * image_size +
                                                     (gi * p + pi) * image_size + (gj * p + pj))] =
                            row[(pi * p + pj) * c + k];
                    }
                }
            }
        }
    }
    return out;
}

Tensor build_sincos_pos_table(int64_t grid, int64_t dim) {
    require(dim % 4 == 0, "sin-cos table needs dim divisible by 4");
    const int64_t quarter = dim / 4;
    Tensor out({grid * grid, dim});
    for (int64_t y = 0; y < grid; ++y) {
        for (int64_t x = 0; x < grid; ++x) {
            double* row = out.data.data() + (y * grid + x) * dim;
            for (int64_t k = 0; k < quarter; ++k) {
                const double omega =
                    1.0 / std::pow(10000.0, static_cast<double>(k) / static_cast<double>(quarter));
                row[k] = std::sin(static_cast<double>(y) * omega);
                row[quarter + k] = std::cos(static_cast<double>(y) * omega);
                row[2 * quarter + k] = std::sin(static_cast<double>(x) * omega);
                row[3 * quarter + k] = std::cos(static_cast<double>(x) * omega);
            }
        }
    }
    return out;
}

void TransformerBlockParams::collect(std::vector<Tensor*>& out) {
    for (Tensor* t : {&ln1_g, &ln1_b, &w_q, &b_q, &w_k, &b_k, &w_v, &b_v, &w_o, &b_o, &ln2_g,
                      &ln2_b, &w_fc1, &b_fc1, &w_fc2, &b_fc2}) {
        out.push_back(t);
    }
}

void DecoderHead::collect(std::vector<Tensor*>& out) {
    out.push_back(&w_in);
    out.push_back(&b_in);
    out.push_back(&mask_token);
    block.collect(out);
    out.push_back(&ln_g);
    out.push_back(&ln_b);
    for (Tensor& k : up_kernels) out.push_back(&k);
    out.push_back(&w_out);
    out.push_back(&b_out);
}

namespace {

Tensor init_weight(Rng& rng, Shape s, double std_dev = 0.02) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.normal(0.0, std_dev);
    return t;
}

void init_block(Rng& rng, TransformerBlockParams& b, int64_t d, int64_t hidden) {
    b.ln1_g = Tensor::full({d}, 1.0);
    b.ln1_b = Tensor::zeros({d});
    b.w_q = init_weight(rng, {d, d});
    b.b_q = Tensor::zeros({d});
    b.w_k = init_weight(rng, {d, d});
    b.b_k = Tensor::zeros({d});
    b.w_v = init_weight(rng, {d, d});
    b.b_v = Tensor::zeros({d});
    b.w_o = init_weight(rng, {d, d});
    b.b_o = Tensor::zeros({d});
    b.ln2_g = Tensor::full({d}, 1.0);
    b.ln2_b = Tensor::zeros({d});
    b.w_fc1 = init_weight(rng, {d, hidden});
    b.b_fc1 = Tensor::zeros({hidden});
    b.w_fc2 = init_weight(rng, {hidden, d});
    b.b_fc2 = Tensor::zeros({d});
}

}  // namespace

VitMimModel::VitMimModel(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    tap_set_.insert(cfg_.tap_layers.begin(), cfg_.tap_layers.end());
    Rng rng(derive_seed(seed, 0x90de1));

    const int64_t d = cfg_.embed_dim;
    const int64_t hidden = static_cast<int64_t>(std::llround(cfg_.mlp_ratio * static_cast<double>(d)));
    pe_w_ = init_weight(rng, {cfg_.patch_dim(), d});
    pe_b_ = Tensor::zeros({d});

    blocks_.resize(static_cast<size_t>(cfg_.num_blocks));
    for (auto& b : blocks_) init_block(rng, b, d, hidden);

    const int64_t dd = cfg_.decoder_dim;
    const int64_t dhidden = static_cast<int64_t>(std::llround(cfg_.mlp_ratio * static_cast<double>(dd)));
    heads_.resize(cfg_.tap_layers.size());
    const int64_t g = cfg_.grid_side();
    for (size_t hi = 0; hi < heads_.size(); ++hi) {
        DecoderHead& hd = heads_[hi];
        hd.tap = cfg_.tap_layers[hi];
        hd.scale = cfg_.supervision_scales[hi];
        hd.w_in = init_weight(rng, {d, dd});
        hd.b_in = Tensor::zeros({dd});
        hd.mask_token = init_weight(rng, {dd});
        init_block(rng, hd.block, dd, dhidden);
        hd.ln_g = Tensor::full({dd}, 1.0);
        hd.ln_b = Tensor::zeros({dd});
        if (hd.scale > g) {
            const int steps = log2_ratio(hd.scale, g);
            hd.up_kernels.reserve(static_cast<size_t>(steps));
            for (int k = 0; k < steps; ++k) {
                Tensor kt({dd, 2, 2});
                for (double& v : kt.data) v = 0.25 + rng.normal(0.0, 0.02);
                hd.up_kernels.push_back(std::move(kt));
            }
        } else if (hd.scale < g) {
            hd.pool_steps = log2_ratio(g, hd.scale);
        }
        hd.w_out = init_weight(rng, {dd, cfg_.hog.num_bins});
        hd.b_out = Tensor::zeros({cfg_.hog.num_bins});
    }

    enc_pos_ = build_sincos_pos_table(g, d);
    dec_pos_ = build_sincos_pos_table(g, dd);

    // Freeze units and the stable parameter naming.
    layers_.resize(static_cast<size_t>(cfg_.num_units()));
    layers_[0].index = 0;
    layers_[0].name = "patch_embed";
    layers_[0].params = {&pe_w_, &pe_b_};
    for (int i = 1; i <= cfg_.num_blocks; ++i) {
        auto& l = layers_[static_cast<size_t>(i)];
        l.index = i;
        l.name = "block" + std::to_string(i);
        blocks_[static_cast<size_t>(i - 1)].collect(l.params);
    }

    auto name_block = [](const std::string& prefix) {
        return std::vector<std::string>{
            prefix + ".ln1_g", prefix + ".ln1_b", prefix + ".w_q", prefix + ".b_q",
            prefix + ".w_k",   prefix + ".b_k",   prefix + ".w_v", prefix + ".b_v",
            prefix + ".w_o",   prefix + ".b_o",   prefix + ".ln2_g", prefix + ".ln2_b",
            prefix + ".w_fc1", prefix + ".b_fc1", prefix + ".w_fc2", prefix + ".b_fc2"};
    };

    named_.emplace_back("patch_embed.w", &pe_w_);
    named_.emplace_back("patch_embed.b", &pe_b_);
    unit_by_param_[&pe_w_] = 0;
    unit_by_param_[&pe_b_] = 0;
    for (int i = 1; i <= cfg_.num_blocks; ++i) {
        std::vector<Tensor*> ps;
        blocks_[static_cast<size_t>(i - 1)].collect(ps);
        auto names = name_block("block" + std::to_string(i));
        for (size_t k = 0; k < ps.size(); ++k) {
            named_.emplace_back(names[k], ps[k]);
            unit_by_param_[ps[k]] = i;
        }
    }
    for (size_t hi = 0; hi < heads_.size(); ++hi) {
        DecoderHead& hd = heads_[hi];
        const std::string prefix = "head" + std::to_string(hi);
        std::vector<std::pair<std::string, Tensor*>> entries;
        entries.emplace_back(prefix + ".w_in", &hd.w_in);
        entries.emplace_back(prefix + ".b_in", &hd.b_in);
        entries.emplace_back(prefix + ".mask_token", &hd.mask_token);
        std::vector<Tensor*> bp;
        hd.block.collect(bp);
        auto names = name_block(prefix + ".block");
        for (size_t k = 0; k < bp.size(); ++k) entries.emplace_back(names[k], bp[k]);
        entries.emplace_back(prefix + ".ln_g", &hd.ln_g);
        entries.emplace_back(prefix + ".ln_b", &hd.ln_b);
        for (size_t k = 0; k < hd.up_kernels.size(); ++k) {
            entries.emplace_back(prefix + ".up" + std::to_string(k), &hd.up_kernels[k]);
        }
        entries.emplace_back(prefix + ".w_out", &hd.w_out);
        entries.emplace_back(prefix + ".b_out", &hd.b_out);
        for (auto& e : entries) {
            unit_by_param_[e.second] = -1;
            named_.push_back(std::move(e));
        }
    }
    for (auto& [name, p] : named_) {
        (void)name;
        p->requires_grad = true;
    }
}

int VitMimModel::unit_of(const Tensor* p) const {
    auto it = unit_by_param_.find(p);
    return it == unit_by_param_.end() ? -2 : it->second;
}

int VitMimModel::num_alive_heads() const {
    int n = 0;
    for (const auto& h : heads_) n += h.pruned ? 0 : 1;
    return n;
}

int VitMimModel::max_alive_tap() const {
    int m = 0;
    for (const auto& h : heads_) {
        if (!h.pruned) m = std::max(m, h.tap);
    }
    return m;
}

Tensor VitMimModel::posemb_for_visible(const std::vector<int64_t>& vis_idx, int64_t batch) const {
    const int64_t v = static_cast<int64_t>(vis_idx.size()) / batch;
    const int64_t d = cfg_.embed_dim;
    Tensor out({batch, v, d});
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t r = 0; r < v; ++r) {
            const int64_t src = vis_idx[static_cast<size_t>(b * v + r)];
            std::copy_n(enc_pos_.data.data() + src * d, d, out.data.data() + (b * v + r) * d);
        }
    }
    return out;
}

Val VitMimModel::block_forward(Exec& ex, TransformerBlockParams& p, Val x, int heads_count) {
    const Shape& xs = x.t().shape;
    const int64_t b = xs[0], tcount = xs[1], d = xs[2];
    const int64_t dh = d / heads_count;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Val h1 = ex.layer_norm(x, ex.param(p.ln1_g), ex.param(p.ln1_b), cfg_.ln_eps);
    auto heads_split = [&](Val t) {
        return ex.transpose(ex.reshape(t, {b, tcount, heads_count, dh}), {0, 2, 1, 3});
    };
    Val q = heads_split(ex.add(ex.matmul(h1, ex.param(p.w_q)), ex.param(p.b_q)));
    Val k = heads_split(ex.add(ex.matmul(h1, ex.param(p.w_k)), ex.param(p.b_k)));
    Val v = heads_split(ex.add(ex.matmul(h1, ex.param(p.w_v)), ex.param(p.b_v)));
    Val scores = ex.scale(ex.matmul(q, ex.transpose(k, {0, 1, 3, 2})), scale);
    Val ctx = ex.matmul(ex.softmax_last(scores), v);  // [B,H,T,dh]
    ctx = ex.reshape(ex.transpose(ctx, {0, 2, 1, 3}), {b, tcount, d});
    Val attn_out = ex.add(ex.matmul(ctx, ex.param(p.w_o)), ex.param(p.b_o));
    x = ex.add(x, attn_out);

    Val h2 = ex.layer_norm(x, ex.param(p.ln2_g), ex.param(p.ln2_b), cfg_.ln_eps);
    Val m = ex.add(ex.matmul(h2, ex.param(p.w_fc1)), ex.param(p.b_fc1));
    m = ex.gelu(m, cfg_.gelu_mode);
    m = ex.add(ex.matmul(m, ex.param(p.w_fc2)), ex.param(p.b_fc2));
    return ex.add(x, m);
}

Val VitMimModel::unit_forward(Exec& ex, int unit, Val x, const Tensor& posemb_visible) {
    if (unit == 0) {
        Val tok = ex.add(ex.matmul(x, ex.param(pe_w_)), ex.param(pe_b_));
        return ex.add(tok, ex.constant(posemb_visible));
    }
    return block_forward(ex, blocks_[static_cast<size_t>(unit - 1)], x, cfg_.num_heads);
}

std::map<int, Val> VitMimModel::encoder_forward(Exec& ex, const Tensor& visible_patches,
                                                const Tensor& posemb_visible,
                                                int frozen_prefix_override, int max_block) {
    const int fp = frozen_prefix_override >= 0 ? frozen_prefix_override : frozen_prefix_;
    if (fp < 0 || fp > cfg_.num_units()) {
        throw ShapeError("encoder_forward: frozen prefix " + std::to_string(fp) +
                         " out of range [0," + std::to_string(cfg_.num_units()) + "]");
    }
    const int last = max_block < 0 ? cfg_.num_blocks : std::min(max_block, cfg_.num_blocks);
    std::map<int, Val> taps;

    Val x;
    int next_unit;
    if (fp > 0) {
        // Inference-mode prefix: plain tensor math, zero tape entries; the
        // boundary (and any tap inside the prefix) enters the recorded graph
        // as a constant that stops backward traversal.
        Exec pure(nullptr);
        Val px = pure.constant(visible_patches);
        for (int u = 0; u < fp && u <= last; ++u) {
            px = unit_forward(pure, u, px, posemb_visible);
            if (u >= 1 && tap_set_.count(u)) taps[u] = ex.frozen_boundary(px.t());
        }
        x = ex.frozen_boundary(px.t());
        next_unit = fp;
    } else {
        x = unit_forward(ex, 0, ex.constant(visible_patches), posemb_visible);
        next_unit = 1;
    }
    for (int u = next_unit; u <= last; ++u) {
        x = unit_forward(ex, u, x, posemb_visible);
        if (tap_set_.count(u)) taps[u] = x;
    }
    return taps;
}

Val VitMimModel::decoder_forward(Exec& ex, int head_index, Val tap_activation,
                                 const std::vector<int64_t>& vis_idx,
                                 const std::vector<int64_t>& mask_idx, int64_t batch) {
    DecoderHead& hd = heads_.at(static_cast<size_t>(head_index));
    require(!hd.pruned, "decoder_forward: head " + std::to_string(head_index) +
                            " is pruned; caller must skip it");
    const int64_t n = cfg_.num_patches();
    const int64_t dd = cfg_.decoder_dim;
    const int64_t vcount = static_cast<int64_t>(vis_idx.size()) / batch;
    const int64_t mcount = static_cast<int64_t>(mask_idx.size()) / batch;
    require(vcount + mcount == n, "decoder_forward: visible+masked must cover all patches");

    Val z = ex.add(ex.matmul(tap_activation, ex.param(hd.w_in)), ex.param(hd.b_in));  // [B,V,dd]
    Val placed_vis = ex.scatter_rows(z, vis_idx, n);
    Val mask_tok = ex.add(ex.constant(Tensor::zeros({batch, mcount, dd})), ex.param(hd.mask_token));
    Val placed_mask = ex.scatter_rows(mask_tok, mask_idx, n);
    Val seq = ex.add(ex.add(placed_vis, placed_mask), ex.constant(dec_pos_));  // + [N,dd] table

    seq = block_forward(ex, hd.block, seq, cfg_.decoder_heads);
    seq = ex.layer_norm(seq, ex.param(hd.ln_g), ex.param(hd.ln_b), cfg_.ln_eps);

    const int64_t g = cfg_.grid_side();
    Val map = ex.transpose(ex.reshape(seq, {batch, g, g, dd}), {0, 3, 1, 2});  // [B,dd,g,g]
    for (Tensor& k : hd.up_kernels) map = ex.upsample2x(map, ex.param(k));
    for (int s = 0; s < hd.pool_steps; ++s) map = ex.avgpool2x(map);

    const int64_t sc = hd.scale;
    Val t = ex.reshape(ex.transpose(map, {0, 2, 3, 1}), {batch, sc * sc, dd});
    t = ex.add(ex.matmul(t, ex.param(hd.w_out)), ex.param(hd.b_out));
    t = ex.reshape(t, {batch, sc, sc, cfg_.hog.num_bins});
    return ex.transpose(t, {0, 3, 1, 2});  // [B,bins,s,s]
}

void VitMimModel::freeze_layer(int index, int64_t step) {
    require(index >= 0 && index < cfg_.num_units(), "freeze_layer: bad index");
    FreezableLayer& l = layers_[static_cast<size_t>(index)];
    require(!l.frozen, "freeze_layer: layer " + std::to_string(index) + " already frozen");
    require(index == frozen_prefix_,
            "freeze_layer: out of order; layers 0.." + std::to_string(index - 1) +
                " must freeze first (frozen prefix is " + std::to_string(frozen_prefix_) + ")");
    for (Tensor* p : l.params) p->requires_grad = false;
    l.frozen = true;
    l.freeze_step = step;
    frozen_prefix_ = index + 1;
}

bool VitMimModel::prune_decoder_if_dead(int head_index, int64_t step) {
    DecoderHead& hd = heads_.at(static_cast<size_t>(head_index));
    if (hd.pruned) return false;
    // dead when patch embed + every block up to the tap is frozen
    if (frozen_prefix_ < hd.tap + 1) return false;
    hd.pruned = true;
    hd.prune_step = step;
    std::vector<Tensor*> ps;
    hd.collect(ps);
    for (Tensor* p : ps) p->requires_grad = false;
    return true;
}

}  // namespace vitfreeze
