#include "vitfreeze/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vitfreeze/rng.hpp"

namespace vitfreeze {

namespace {

double eval_loss(GradCheckCase& c) {
    Tape t;
    std::vector<NodeId> ids;
    NodeId loss = c.forward(t, ids);
    return t.value(loss).data[0];
}

Tensor rand_tensor(Rng& rng, Shape s, double scale = 1.0) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.normal() * scale;
    return t;
}

}  // namespace

GradCheckResult run_gradcheck(GradCheckCase& c, const GradCheckOptions& opt) {
    GradCheckResult res;
    res.name = c.name;

    // Analytic pass.
    std::vector<Tensor> analytic;
    {
        Tape t;
        std::vector<NodeId> ids;
        NodeId loss = c.forward(t, ids);
        require(ids.size() == c.inputs.size(),
                "gradcheck '" + c.name + "': forward must leaf every input");
        auto grads = t.backward(loss);
        for (size_t i = 0; i < c.inputs.size(); ++i) {
            auto it = grads.find(ids[i]);
            analytic.push_back(it != grads.end() ? it->second : Tensor::zeros(c.inputs[i].shape));
        }
    }

    Rng coord_rng(derive_seed(opt.coord_seed, 0xc09d));
    for (size_t ti = 0; ti < c.inputs.size(); ++ti) {
        Tensor& x = c.inputs[ti];
        const int64_t n = x.size();
        std::vector<int64_t> coords;
        if (opt.max_coords_per_tensor < 0 || n <= opt.max_coords_per_tensor) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int64_t i = 0; i < opt.max_coords_per_tensor; ++i) {
                coords.push_back(static_cast<int64_t>(coord_rng.below(static_cast<uint64_t>(n))));
            }
        }
        for (int64_t ci : coords) {
            const size_t u = static_cast<size_t>(ci);
            const double orig = x.data[u];
            const double h = opt.h * std::max(1.0, std::fabs(orig));
            x.data[u] = orig + h;
            const double fp = eval_loss(c);
            x.data[u] = orig - h;
            const double fm = eval_loss(c);
            x.data[u] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double a = analytic[ti].data[u];
            const double denom = std::max(std::fabs(a) + std::fabs(fd), opt.denom_floor);
            const double err = std::fabs(a - fd) / denom;
            res.max_err = std::max(res.max_err, err);
            ++res.coords_checked;
        }
    }
    res.passed = res.max_err < opt.tol;
    return res;
}

namespace {

using Builder = std::function<NodeId(Tape&, std::vector<NodeId>&, const std::vector<Tensor>&)>;

struct Family {
    std::string name;
    std::function<std::vector<Tensor>(Rng&)> make_inputs;
    Builder build;
};

GradCheckResult run_family(const Family& fam, int num_seeds, const GradCheckOptions& opt) {
    GradCheckResult agg;
    agg.name = fam.name;
    agg.passed = true;
    for (int s = 0; s < num_seeds; ++s) {
        Rng rng(derive_seed(0x5eedULL + static_cast<uint64_t>(s), 0xfa));
        GradCheckCase c;
        c.name = fam.name;
        c.inputs = fam.make_inputs(rng);
        c.forward = [&fam, &c](Tape& t, std::vector<NodeId>& ids) {
            return fam.build(t, ids, c.inputs);
        };
        GradCheckOptions o = opt;
        o.coord_seed = derive_seed(opt.coord_seed, static_cast<uint64_t>(s) + 1);
        GradCheckResult r = run_gradcheck(c, o);
        agg.max_err = std::max(agg.max_err, r.max_err);
        agg.coords_checked += r.coords_checked;
        agg.passed = agg.passed && r.passed;
    }
    return agg;
}

}  // namespace

std::vector<GradCheckResult> run_op_gradcheck_suite(int num_seeds, const GradCheckOptions& opt) {
    auto leaf_all = [](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
        for (const Tensor& x : in) ids.push_back(t.leaf(x, true));
    };
    // Reduce an op output to a scalar through a fixed random projection so
    // every output coordinate influences the loss.
    auto proj = [](Tape& t, NodeId out, uint64_t salt) {
        Rng rng(derive_seed(0x77aa, salt));
        Tensor w(t.value(out).shape);
        for (double& x : w.data) x = rng.normal();
        return t.sum_all(t.mul(out, t.leaf(std::move(w), false)));
    };

    std::vector<Family> fams;
    fams.push_back({"matmul_2d",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {3, 4}), rand_tensor(r, {4, 2})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.matmul(ids[0], ids[1]), 1);
        }});
    fams.push_back({"matmul_batched_shared",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {2, 3, 4}), rand_tensor(r, {4, 5})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.matmul(ids[0], ids[1]), 2);
        }});
    fams.push_back({"matmul_batched_both",
        [](Rng& r) {
            return std::vector<Tensor>{rand_tensor(r, {2, 2, 3, 4}), rand_tensor(r, {2, 2, 4, 3})};
        },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.matmul(ids[0], ids[1]), 3);
        }});
    fams.push_back({"add_broadcast",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {2, 3, 5}), rand_tensor(r, {5})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.add(ids[0], ids[1]), 4);
        }});
    fams.push_back({"sub_broadcast",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {4, 6}), rand_tensor(r, {6})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.sub(ids[0], ids[1]), 5);
        }});
    fams.push_back({"mul_broadcast",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {3, 2, 4}), rand_tensor(r, {2, 4})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.mul(ids[0], ids[1]), 6);
        }});
    fams.push_back({"mul_self_square",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {3, 4})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.mul(ids[0], ids[0]), 7);
        }});
    fams.push_back({"scale",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {2, 7})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.scale(ids[0], -1.7), 8);
        }});
    fams.push_back({"transpose",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {2, 3, 4})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.transpose(ids[0], {2, 0, 1}), 9);
        }});
    fams.push_back({"reshape",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {3, 8})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.reshape(ids[0], {2, 3, 4}), 10);
        }});
    fams.push_back({"layer_norm",
        [](Rng& r) {
            return std::vector<Tensor>{rand_tensor(r, {2, 8}), rand_tensor(r, {8}, 0.5),
                                       rand_tensor(r, {8}, 0.5)};
        },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.layer_norm(ids[0], ids[1], ids[2], 1e-6), 11);
        }});
    fams.push_back({"softmax_last",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {4, 6})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.softmax_last(ids[0]), 12);
        }});
    fams.push_back({"gelu_tanh",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {3, 5})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.gelu(ids[0], ops::GeluMode::kTanh), 13);
        }});
    fams.push_back({"gelu_erf",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {3, 5})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.gelu(ids[0], ops::GeluMode::kErf), 14);
        }});
    fams.push_back({"avgpool2x",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {2, 4, 4})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.avgpool2x(ids[0]), 15);
        }});
    fams.push_back({"upsample2x",
        [](Rng& r) {
            return std::vector<Tensor>{rand_tensor(r, {2, 4, 4}), rand_tensor(r, {2, 2, 2})};
        },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.upsample2x(ids[0], ids[1]), 16);
        }});
    fams.push_back({"gather_rows",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {2, 6, 3})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            // index plan with repeated rows: backward must accumulate
            return proj(t, t.gather_rows(ids[0], {0, 2, 2, 5, 1, 1, 4, 0}, 4), 17);
        }});
    fams.push_back({"scatter_rows",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {2, 3, 4})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return proj(t, t.scatter_rows(ids[0], {5, 0, 2, 1, 4, 3}, 6), 18);
        }});
    fams.push_back({"sum_all",
        [](Rng& r) { return std::vector<Tensor>{rand_tensor(r, {3, 3})}; },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            return t.sum_all(t.mul(ids[0], ids[0]));
        }});
    // Composite: attention-shaped subgraph (projections, scaled scores,
    // softmax, value mix, residual).
    fams.push_back({"composite_attention",
        [](Rng& r) {
            return std::vector<Tensor>{rand_tensor(r, {5, 8}, 0.5), rand_tensor(r, {8, 8}, 0.3),
                                       rand_tensor(r, {8, 8}, 0.3), rand_tensor(r, {8, 8}, 0.3)};
        },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            NodeId x = ids[0];
            NodeId q = t.matmul(x, ids[1]);
            NodeId k = t.matmul(x, ids[2]);
            NodeId v = t.matmul(x, ids[3]);
            NodeId scores = t.scale(t.matmul(q, t.transpose(k, {1, 0})), 1.0 / std::sqrt(8.0));
            NodeId attn = t.matmul(t.softmax_last(scores), v);
            return proj(t, t.add(x, attn), 19);
        }});
    // Composite: pre-norm MLP with GELU and residual.
    fams.push_back({"composite_mlp",
        [](Rng& r) {
            return std::vector<Tensor>{rand_tensor(r, {4, 6}, 0.7), rand_tensor(r, {6}, 0.2),
                                       rand_tensor(r, {6}, 0.2),    rand_tensor(r, {6, 12}, 0.4),
                                       rand_tensor(r, {12}, 0.1),   rand_tensor(r, {12, 6}, 0.4),
                                       rand_tensor(r, {6}, 0.1)};
        },
        [&](Tape& t, std::vector<NodeId>& ids, const std::vector<Tensor>& in) {
            leaf_all(t, ids, in);
            NodeId h = t.layer_norm(ids[0], ids[1], ids[2], 1e-6);
            h = t.add(t.matmul(h, ids[3]), ids[4]);
            h = t.gelu(h, ops::GeluMode::kTanh);
            h = t.add(t.matmul(h, ids[5]), ids[6]);
            return proj(t, t.add(ids[0], h), 20);
        }});

    std::vector<GradCheckResult> out;
    out.reserve(fams.size());
    for (const Family& f : fams) out.push_back(run_family(f, num_seeds, opt));
    return out;
}

bool all_passed(const std::vector<GradCheckResult>& rs) {
    return std::all_of(rs.begin(), rs.end(), [](const GradCheckResult& r) { return r.passed; });
}

}  // namespace vitfreeze
