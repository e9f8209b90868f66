#include "vitfreeze/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace vitfreeze {

NodeId Tape::push_node(Tensor value, bool requires_grad, bool leaf) {
    Node n;
    n.value = std::move(value);
    n.value.requires_grad = requires_grad;
    n.requires_grad = requires_grad;
    n.is_leaf = leaf;
    nodes_.push_back(std::move(n));
    const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
    nodes_.back().value.node = id;
    return id;
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
    return push_node(std::move(value), requires_grad, true);
}

bool Tape::any_grad(std::initializer_list<NodeId> ids) const {
    for (NodeId id : ids) {
        if (nodes_[check(id)].requires_grad) return true;
    }
    return false;
}

NodeId Tape::record(const char* name, std::vector<NodeId> inputs, Tensor value,
                    std::function<void(Tape&)> back) {
    NodeId out = push_node(std::move(value), true, false);
    records_.push_back(Record{name, std::move(inputs), out, std::move(back)});
    return out;
}

void Tape::accum(NodeId id, const Tensor& g) {
    const size_t u = check(id);
    if (!nodes_[u].requires_grad) return;
    if (g.shape != nodes_[u].value.shape) {
        throw ShapeError("tape: gradient shape " + shape_str(g.shape) + " vs value shape " +
                         shape_str(nodes_[u].value.shape));
    }
    if (grad_set_[u]) {
        Tensor& dst = grads_[u];
        for (int64_t i = 0; i < dst.size(); ++i) {
            dst.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
        }
    } else {
        grads_[u] = g;
        grad_set_[u] = 1;
    }
}

const Tensor* Tape::grad(NodeId id) const {
    const size_t u = check(id);
    if (u >= grad_set_.size() || !grad_set_[u]) return nullptr;
    return &grads_[u];
}

// ---- elementwise ----

NodeId Tape::add(NodeId a, NodeId b) {
    Tensor v = ops::add(value(a), value(b));
    if (!any_grad({a, b})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    const Shape bshape = value(b).shape;
    records_.push_back({"add", {a, b}, out, [a, b, out, bshape](Tape& t) {
        const Tensor& g = t.grad_ref(out);
        t.accum(a, g);
        t.accum(b, ops::reduce_to_shape(g, bshape));
    }});
    return out;
}

NodeId Tape::sub(NodeId a, NodeId b) {
    Tensor v = ops::sub(value(a), value(b));
    if (!any_grad({a, b})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    const Shape bshape = value(b).shape;
    records_.push_back({"sub", {a, b}, out, [a, b, out, bshape](Tape& t) {
        const Tensor& g = t.grad_ref(out);
        t.accum(a, g);
        t.accum(b, ops::scale(ops::reduce_to_shape(g, bshape), -1.0));
    }});
    return out;
}

NodeId Tape::mul(NodeId a, NodeId b) {
    Tensor v = ops::mul(value(a), value(b));
    if (!any_grad({a, b})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    const Shape bshape = value(b).shape;
    records_.push_back({"mul", {a, b}, out, [a, b, out, bshape](Tape& t) {
        const Tensor& g = t.grad_ref(out);
        // d/da = g ⊙ b (b broadcast up), d/db = Σ_leading g ⊙ a
        t.accum(a, ops::mul(g, t.value(b)));
        t.accum(b, ops::reduce_to_shape(ops::mul(g, t.value(a)), bshape));
    }});
    return out;
}

NodeId Tape::scale(NodeId a, double s) {
    Tensor v = ops::scale(value(a), s);
    if (!any_grad({a})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    records_.push_back({"scale", {a}, out, [a, out, s](Tape& t) {
        t.accum(a, ops::scale(t.grad_ref(out), s));
    }});
    return out;
}

// ---- matmul ----

NodeId Tape::matmul(NodeId a, NodeId b) {
    Tensor v = ops::matmul(value(a), value(b));
    if (!any_grad({a, b})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    records_.push_back({"matmul", {a, b}, out, [a, b, out](Tape& t) {
        const Tensor& g = t.grad_ref(out);
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        const int64_t m = av.shape[av.shape.size() - 2];
        const int64_t k = av.shape[av.shape.size() - 1];
        const int64_t n = bv.shape[bv.shape.size() - 1];
        const int64_t batch = ops::batch_count(av.shape, 2);
        const bool b_shared = bv.rank() == 2;
        if (t.nodes_[t.check(a)].requires_grad) {
            Tensor da(av.shape);
            for (int64_t bi = 0; bi < batch; ++bi) {
                ops::matmul_nt(g.data.data() + bi * m * n,
                               bv.data.data() + (b_shared ? 0 : bi * k * n),
                               da.data.data() + bi * m * k, m, n, k);
            }
            t.accum(a, da);
        }
        if (t.nodes_[t.check(b)].requires_grad) {
            Tensor db(bv.shape);
            for (int64_t bi = 0; bi < batch; ++bi) {
                ops::matmul_tn(av.data.data() + bi * m * k, g.data.data() + bi * m * n,
                               db.data.data() + (b_shared ? 0 : bi * k * n), k, m, n,
                               /*accumulate=*/b_shared);
            }
            t.accum(b, db);
        }
    }});
    return out;
}

// ---- shape ops ----

NodeId Tape::transpose(NodeId a, std::vector<int64_t> perm) {
    Tensor v = ops::transpose(value(a), perm);
    if (!any_grad({a})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    std::vector<int64_t> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int64_t>(i);
    records_.push_back({"transpose", {a}, out, [a, out, inv](Tape& t) {
        t.accum(a, ops::transpose(t.grad_ref(out), inv));
    }});
    return out;
}

NodeId Tape::reshape(NodeId a, Shape target) {
    Tensor v = ops::reshape(value(a), target);
    if (!any_grad({a})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    const Shape orig = value(a).shape;
    records_.push_back({"reshape", {a}, out, [a, out, orig](Tape& t) {
        t.accum(a, ops::reshape(t.grad_ref(out), orig));
    }});
    return out;
}

// ---- normalization / activations ----

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    auto mean = std::make_shared<std::vector<double>>();
    auto rstd = std::make_shared<std::vector<double>>();
    Tensor v = ops::layer_norm(value(x), value(gamma), value(beta), eps, mean.get(), rstd.get());
    if (!any_grad({x, gamma, beta})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    records_.push_back({"layer_norm", {x, gamma, beta}, out, [x, gamma, beta, out, mean, rstd](Tape& t) {
        const Tensor& g = t.grad_ref(out);
        const Tensor& xv = t.value(x);
        const Tensor& gv = t.value(gamma);
        const int64_t d = xv.shape.back();
        const int64_t rows = xv.size() / d;
        Tensor dx(xv.shape), dgamma(gv.shape), dbeta(gv.shape);
        for (int64_t r = 0; r < rows; ++r) {
            const double* xr = xv.data.data() + r * d;
            const double* gr = g.data.data() + r * d;
            double* dxr = dx.data.data() + r * d;
            const double mu = (*mean)[static_cast<size_t>(r)];
            const double rs = (*rstd)[static_cast<size_t>(r)];
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int64_t i = 0; i < d; ++i) {
                const double xhat = (xr[i] - mu) * rs;
                const double dxhat = gr[i] * gv.data[static_cast<size_t>(i)];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
                dgamma.data[static_cast<size_t>(i)] += gr[i] * xhat;
                dbeta.data[static_cast<size_t>(i)] += gr[i];
            }
            const double inv_d = 1.0 / static_cast<double>(d);
            for (int64_t i = 0; i < d; ++i) {
                const double xhat = (xr[i] - mu) * rs;
                const double dxhat = gr[i] * gv.data[static_cast<size_t>(i)];
                dxr[i] = rs * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
            }
        }
        t.accum(x, dx);
        t.accum(gamma, dgamma);
        t.accum(beta, dbeta);
    }});
    return out;
}

NodeId Tape::softmax_last(NodeId x) {
    Tensor v = ops::softmax_last(value(x));
    if (!any_grad({x})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    records_.push_back({"softmax_last", {x}, out, [x, out](Tape& t) {
        const Tensor& g = t.grad_ref(out);
        const Tensor& s = t.value(out);
        const int64_t d = s.shape.back();
        const int64_t rows = s.size() / d;
        Tensor dx(s.shape);
        for (int64_t r = 0; r < rows; ++r) {
            const double* sr = s.data.data() + r * d;
            const double* gr = g.data.data() + r * d;
            double* dxr = dx.data.data() + r * d;
            double dot = 0.0;
            for (int64_t i = 0; i < d; ++i) dot += gr[i] * sr[i];
            for (int64_t i = 0; i < d; ++i) dxr[i] = sr[i] * (gr[i] - dot);
        }
        t.accum(x, dx);
    }});
    return out;
}

NodeId Tape::gelu(NodeId x, ops::GeluMode mode) {
    Tensor v = ops::gelu(value(x), mode);
    if (!any_grad({x})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    records_.push_back({"gelu", {x}, out, [x, out, mode](Tape& t) {
        const Tensor& g = t.grad_ref(out);
        const Tensor& xv = t.value(x);
        Tensor dx(xv.shape);
        for (int64_t i = 0; i < xv.size(); ++i) {
            dx.data[static_cast<size_t>(i)] =
                g.data[static_cast<size_t>(i)] *
                ops::gelu_grad_scalar(xv.data[static_cast<size_t>(i)], mode);
        }
        t.accum(x, dx);
    }});
    return out;
}

// ---- spatial ----

NodeId Tape::avgpool2x(NodeId x) {
    Tensor v = ops::avgpool2x(value(x));
    if (!any_grad({x})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    records_.push_back({"avgpool2x", {x}, out, [x, out](Tape& t) {
        const Tensor& g = t.grad_ref(out);
        const Tensor& xv = t.value(x);
        const int64_t h = xv.shape[xv.shape.size() - 2];
        const int64_t w = xv.shape[xv.shape.size() - 1];
        const int64_t batch = ops::batch_count(xv.shape, 2);
        const int64_t oh = h / 2, ow = w / 2;
        Tensor dx(xv.shape);
        for (int64_t b = 0; b < batch; ++b) {
            const double* gp = g.data.data() + b * oh * ow;
            double* dp = dx.data.data() + b * h * w;
            for (int64_t i = 0; i < oh; ++i) {
                for (int64_t j = 0; j < ow; ++j) {
                    const double v4 = 0.25 * gp[i * ow + j];
                    dp[(2 * i) * w + 2 * j] = v4;
                    dp[(2 * i) * w + 2 * j + 1] = v4;
                    dp[(2 * i + 1) * w + 2 * j] = v4;
                    dp[(2 * i + 1) * w + 2 * j + 1] = v4;
                }
            }
        }
        t.accum(x, dx);
    }});
    return out;
}

NodeId Tape::upsample2x(NodeId x, NodeId kernel) {
    Tensor v = ops::upsample2x(value(x), value(kernel));
    if (!any_grad({x, kernel})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    records_.push_back({"upsample2x", {x, kernel}, out, [x, kernel, out](Tape& t) {
        const Tensor& g = t.grad_ref(out);
        const Tensor& xv = t.value(x);
        const Tensor& kv = t.value(kernel);
        const int64_t c = xv.shape[xv.shape.size() - 3];
        const int64_t h = xv.shape[xv.shape.size() - 2];
        const int64_t w = xv.shape[xv.shape.size() - 1];
        const int64_t batch = ops::batch_count(xv.shape, 3);
        Tensor dx(xv.shape);
        Tensor dk(kv.shape);
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t ch = 0; ch < c; ++ch) {
                const double* xp = xv.data.data() + (b * c + ch) * h * w;
                const double* gp = g.data.data() + (b * c + ch) * 4 * h * w;
                double* dxp = dx.data.data() + (b * c + ch) * h * w;
                const double k00 = kv.data[static_cast<size_t>(ch * 4 + 0)];
                const double k01 = kv.data[static_cast<size_t>(ch * 4 + 1)];
                const double k10 = kv.data[static_cast<size_t>(ch * 4 + 2)];
                const double k11 = kv.data[static_cast<size_t>(ch * 4 + 3)];
                double s00 = 0.0, s01 = 0.0, s10 = 0.0, s11 = 0.0;
                for (int64_t i = 0; i < h; ++i) {
                    const double* g0 = gp + (2 * i) * 2 * w;
                    const double* g1 = gp + (2 * i + 1) * 2 * w;
                    for (int64_t j = 0; j < w; ++j) {
                        const double xval = xp[i * w + j];
                        dxp[i * w + j] = g0[2 * j] * k00 + g0[2 * j + 1] * k01 +
                                         g1[2 * j] * k10 + g1[2 * j + 1] * k11;
                        s00 += g0[2 * j] * xval;
                        s01 += g0[2 * j + 1] * xval;
                        s10 += g1[2 * j] * xval;
                        s11 += g1[2 * j + 1] * xval;
                    }
                }
                dk.data[static_cast<size_t>(ch * 4 + 0)] += s00;
                dk.data[static_cast<size_t>(ch * 4 + 1)] += s01;
                dk.data[static_cast<size_t>(ch * 4 + 2)] += s10;
                dk.data[static_cast<size_t>(ch * 4 + 3)] += s11;
            }
        }
        t.accum(x, dx);
        t.accum(kernel, dk);
    }});
    return out;
}

// ---- indexing / reduction ----

NodeId Tape::gather_rows(NodeId x, std::vector<int64_t> idx, int64_t rows_out) {
    Tensor v = ops::gather_rows(value(x), idx, rows_out);
    if (!any_grad({x})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    records_.push_back({"gather_rows", {x}, out, [x, out, idx, rows_out](Tape& t) {
        const Tensor& g = t.grad_ref(out);
        const Tensor& xv = t.value(x);
        const int64_t n = xv.shape[xv.shape.size() - 2];
        const int64_t d = xv.shape[xv.shape.size() - 1];
        const int64_t batch = ops::batch_count(xv.shape, 2);
        Tensor dx(xv.shape);  // scatter-add: repeated indices accumulate
        for (int64_t b = 0; b < batch; ++b) {
            const double* gp = g.data.data() + b * rows_out * d;
            double* dp = dx.data.data() + b * n * d;
            for (int64_t r = 0; r < rows_out; ++r) {
                const int64_t dst = idx[static_cast<size_t>(b * rows_out + r)];
                for (int64_t i = 0; i < d; ++i) dp[dst * d + i] += gp[r * d + i];
            }
        }
        t.accum(x, dx);
    }});
    return out;
}

NodeId Tape::scatter_rows(NodeId x, std::vector<int64_t> idx, int64_t rows_out) {
    Tensor v = ops::scatter_rows(value(x), idx, rows_out);
    if (!any_grad({x})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    const int64_t k = value(x).shape[value(x).shape.size() - 2];
    records_.push_back({"scatter_rows", {x}, out, [x, out, idx, k](Tape& t) {
        t.accum(x, ops::gather_rows(t.grad_ref(out), idx, k));
    }});
    return out;
}

NodeId Tape::sum_all(NodeId x) {
    Tensor v = ops::sum_all(value(x));
    if (!any_grad({x})) return leaf(std::move(v), false);
    NodeId out = push_node(std::move(v), true, false);
    records_.push_back({"sum_all", {x}, out, [x, out](Tape& t) {
        const double gv = t.grad_ref(out).data[0];
        t.accum(x, Tensor::full(t.value(x).shape, gv));
    }});
    return out;
}

// ---- reverse pass ----

std::unordered_map<NodeId, Tensor> Tape::backward(NodeId loss) {
    const size_t lu = check(loss);
    if (nodes_[lu].value.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " +
                         shape_str(nodes_[lu].value.shape));
    }
    grads_.assign(nodes_.size(), Tensor());
    grad_set_.assign(nodes_.size(), 0);
    grads_[lu] = Tensor::full(nodes_[lu].value.shape, 1.0);
    grad_set_[lu] = 1;

    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        const size_t ou = static_cast<size_t>(it->output);
        if (!grad_set_[ou]) continue;              // not on any path to the loss
        if (nodes_[ou].frozen_boundary) continue;  // exclusion: stop here, nothing upstream
        it->back(*this);
    }

    std::unordered_map<NodeId, Tensor> out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].is_leaf && nodes_[i].requires_grad && grad_set_[i]) {
            out.emplace(static_cast<NodeId>(i), grads_[i]);
        }
    }
    return out;
}

}  // namespace vitfreeze
