#include "vitfreeze/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace vitfreeze::ops {

namespace {

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    size_t off = big.size() - small.size();
    for (size_t i = 0; i < small.size(); ++i) {
        if (small[i] != big[off + i]) return false;
    }
    return true;
}

void require_suffix(const Tensor& a, const Tensor& b, const char* op) {
    if (!is_suffix(b.shape, a.shape)) {
        throw ShapeError(std::string(op) + ": shape " + shape_str(b.shape) +
                         " is not a trailing suffix of " + shape_str(a.shape));
    }
}

template <typename F>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, const char* op, F f) {
    require_suffix(a, b, op);
    Tensor out(a.shape);
    const int64_t bn = b.size();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) {
        out.data[static_cast<size_t>(i)] =
            f(a.data[static_cast<size_t>(i)], b.data[static_cast<size_t>(i % bn)]);
    }
    check_finite(out, op);
    return out;
}

}  // namespace

int64_t batch_count(const Shape& s, int64_t trailing_dims) {
    int64_t b = 1;
    for (size_t i = 0; i + static_cast<size_t>(trailing_dims) < s.size(); ++i) b *= s[i];
    return b;
}

Shape suffix(const Shape& s, int64_t n) {
    Shape out;
    for (size_t i = s.size() - static_cast<size_t>(n); i < s.size(); ++i) out.push_back(s[i]);
    return out;
}

void matmul_nn(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            const double* bk = b + kk * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate) {
    // c[i,j] = sum_k a[i,k] * b[j,k]
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (int64_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate) {
    // c[i,j] = sum_k a[k,i] * b[k,j]
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (int64_t kk = 0; kk < k; ++kk) {
        const double* ak = a + kk * m;
        const double* bk = b + kk * n;
        for (int64_t i = 0; i < m; ++i) {
            const double av = ak[i];
            double* ci = c + i * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
        }
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    return broadcast_binary(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return broadcast_binary(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return broadcast_binary(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape);
    for (int64_t i = 0; i < a.size(); ++i) out.data[static_cast<size_t>(i)] = a.data[static_cast<size_t>(i)] * s;
    check_finite(out, "scale");
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw ShapeError("matmul: both operands need rank >= 2, got " + shape_str(a.shape) +
                         " x " + shape_str(b.shape));
    }
    const int64_t m = a.shape[a.shape.size() - 2];
    const int64_t k = a.shape[a.shape.size() - 1];
    const int64_t kb = b.shape[b.shape.size() - 2];
    const int64_t n = b.shape[b.shape.size() - 1];
    if (k != kb) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape) + " x " +
                         shape_str(b.shape));
    }
    const int64_t batch = batch_count(a.shape, 2);
    bool b_shared;
    if (b.rank() == 2) {
        b_shared = true;
    } else if (std::equal(a.shape.begin(), a.shape.end() - 2, b.shape.begin(), b.shape.end() - 2)) {
        b_shared = false;
    } else {
        throw ShapeError("matmul: batch dims disagree, " + shape_str(a.shape) + " x " +
                         shape_str(b.shape));
    }
    Shape out_shape(a.shape.begin(), a.shape.end() - 1);
    out_shape.push_back(n);
    Tensor out(out_shape);
    for (int64_t bi = 0; bi < batch; ++bi) {
        const double* ap = a.data.data() + bi * m * k;
        const double* bp = b.data.data() + (b_shared ? 0 : bi * k * n);
        matmul_nn(ap, bp, out.data.data() + bi * m * n, m, k, n);
    }
    check_finite(out, "matmul");
    return out;
}

Tensor transpose(const Tensor& a, const std::vector<int64_t>& perm) {
    const int64_t r = a.rank();
    if (static_cast<int64_t>(perm.size()) != r) {
        throw ShapeError("transpose: perm size " + std::to_string(perm.size()) +
                         " vs rank " + std::to_string(r));
    }
    std::vector<bool> seen(static_cast<size_t>(r), false);
    for (int64_t p : perm) {
        if (p < 0 || p >= r || seen[static_cast<size_t>(p)]) {
            throw ShapeError("transpose: invalid permutation");
        }
        seen[static_cast<size_t>(p)] = true;
    }
    Shape out_shape(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) out_shape[static_cast<size_t>(i)] = a.shape[static_cast<size_t>(perm[static_cast<size_t>(i)])];

    std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
    for (int64_t i = r - 2; i >= 0; --i) {
        in_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i + 1)] * a.shape[static_cast<size_t>(i + 1)];
    }
    // stride of the input axis that lands at output position i
    std::vector<int64_t> strides(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];

    Tensor out(out_shape);
    std::vector<int64_t> idx(static_cast<size_t>(r), 0);
    const int64_t total = out.size();
    int64_t src = 0;
    for (int64_t flat = 0; flat < total; ++flat) {
        out.data[static_cast<size_t>(flat)] = a.data[static_cast<size_t>(src)];
        for (int64_t ax = r - 1; ax >= 0; --ax) {
            auto u = static_cast<size_t>(ax);
            if (++idx[u] < out_shape[u]) {
                src += strides[u];
                break;
            }
            idx[u] = 0;
            src -= strides[u] * (out_shape[u] - 1);
        }
    }
    return out;
}

Tensor reshape(const Tensor& a, Shape target) {
    if (numel(target) != a.size()) {
        throw ShapeError("reshape: " + shape_str(a.shape) + " has " + std::to_string(a.size()) +
                         " elements, target " + shape_str(target) + " has " +
                         std::to_string(numel(target)));
    }
    Tensor out = a;
    out.shape = std::move(target);
    out.node = kNoNode;
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  std::vector<double>* save_mean, std::vector<double>* save_rstd) {
    const int64_t d = x.shape.empty() ? 0 : x.shape.back();
    if (d < 1) throw ShapeError("layer_norm: empty last axis");
    if (gamma.shape != Shape{d} || beta.shape != Shape{d}) {
        throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape) + "/" +
                         shape_str(beta.shape) + " vs feature dim " + std::to_string(d));
    }
    if (eps <= 0.0) throw ShapeError("layer_norm: eps must be > 0");
    const int64_t rows = x.size() / d;
    Tensor out(x.shape);
    if (save_mean) save_mean->assign(static_cast<size_t>(rows), 0.0);
    if (save_rstd) save_rstd->assign(static_cast<size_t>(rows), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * d;
        double* or_ = out.data.data() + r * d;
        double mean = 0.0;
        for (int64_t i = 0; i < d; ++i) mean += xr[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            const double c = xr[i] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (int64_t i = 0; i < d; ++i) {
            or_[i] = (xr[i] - mean) * rstd * gamma.data[static_cast<size_t>(i)] +
                     beta.data[static_cast<size_t>(i)];
        }
        if (save_mean) (*save_mean)[static_cast<size_t>(r)] = mean;
        if (save_rstd) (*save_rstd)[static_cast<size_t>(r)] = rstd;
    }
    check_finite(out, "layer_norm");
    return out;
}

Tensor softmax_last(const Tensor& x) {
    const int64_t d = x.shape.empty() ? 0 : x.shape.back();
    if (d < 1) throw ShapeError("softmax_last: empty last axis");
    const int64_t rows = x.size() / d;
    Tensor out(x.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * d;
        double* or_ = out.data.data() + r * d;
        double mx = xr[0];
        for (int64_t i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
        double sum = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            const double e = std::exp(xr[i] - mx);
            or_[i] = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int64_t i = 0; i < d; ++i) or_[i] *= inv;
    }
    check_finite(out, "softmax_last");
    return out;
}

double gelu_scalar(double x, GeluMode mode) {
    if (mode == GeluMode::kErf) {
        return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    }
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    const double u = kC * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad_scalar(double x, GeluMode mode) {
    if (mode == GeluMode::kErf) {
        const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
    }
    constexpr double kC = 0.7978845608028654;
    const double u = kC * (x + 0.044715 * x * x * x);
    const double th = std::tanh(u);
    const double du = kC * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

Tensor gelu(const Tensor& x, GeluMode mode) {
    Tensor out(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) {
        out.data[static_cast<size_t>(i)] = gelu_scalar(x.data[static_cast<size_t>(i)], mode);
    }
    check_finite(out, "gelu");
    return out;
}

Tensor avgpool2x(const Tensor& x) {
    if (x.rank() < 2) throw ShapeError("avgpool2x: rank >= 2 required, got " + shape_str(x.shape));
    const int64_t h = x.shape[x.shape.size() - 2];
    const int64_t w = x.shape[x.shape.size() - 1];
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("avgpool2x: spatial dims must be even, got " + shape_str(x.shape));
    }
    const int64_t batch = batch_count(x.shape, 2);
    Shape out_shape = x.shape;
    out_shape[out_shape.size() - 2] = h / 2;
    out_shape[out_shape.size() - 1] = w / 2;
    Tensor out(out_shape);
    const int64_t oh = h / 2, ow = w / 2;
    for (int64_t b = 0; b < batch; ++b) {
        const double* xp = x.data.data() + b * h * w;
        double* op = out.data.data() + b * oh * ow;
        for (int64_t i = 0; i < oh; ++i) {
            for (int64_t j = 0; j < ow; ++j) {
                const double* c0 = xp + (2 * i) * w + 2 * j;
                const double* c1 = xp + (2 * i + 1) * w + 2 * j;
                op[i * ow + j] = 0.25 * (c0[0] + c0[1] + c1[0] + c1[1]);
            }
        }
    }
    check_finite(out, "avgpool2x");
    return out;
}

Tensor upsample2x(const Tensor& x, const Tensor& kernel) {
    if (x.rank() < 3) throw ShapeError("upsample2x: rank >= 3 required, got " + shape_str(x.shape));
    const int64_t c = x.shape[x.shape.size() - 3];
    const int64_t h = x.shape[x.shape.size() - 2];
    const int64_t w = x.shape[x.shape.size() - 1];
    if (kernel.shape != Shape{c, 2, 2}) {
        throw ShapeError("upsample2x: kernel " + shape_str(kernel.shape) + " vs expected [" +
                         std::to_string(c) + ",2,2] for input " + shape_str(x.shape));
    }
    const int64_t batch = batch_count(x.shape, 3);
    Shape out_shape = x.shape;
    out_shape[out_shape.size() - 2] = 2 * h;
    out_shape[out_shape.size() - 1] = 2 * w;
    Tensor out(out_shape);
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* xp = x.data.data() + (b * c + ch) * h * w;
            double* op = out.data.data() + (b * c + ch) * 4 * h * w;
            const double k00 = kernel.data[static_cast<size_t>(ch * 4 + 0)];
            const double k01 = kernel.data[static_cast<size_t>(ch * 4 + 1)];
            const double k10 = kernel.data[static_cast<size_t>(ch * 4 + 2)];
            const double k11 = kernel.data[static_cast<size_t>(ch * 4 + 3)];
            for (int64_t i = 0; i < h; ++i) {
                double* r0 = op + (2 * i) * 2 * w;
                double* r1 = op + (2 * i + 1) * 2 * w;
                const double* xr = xp + i * w;
                for (int64_t j = 0; j < w; ++j) {
                    const double v = xr[j];
                    r0[2 * j] = v * k00;
                    r0[2 * j + 1] = v * k01;
                    r1[2 * j] = v * k10;
                    r1[2 * j + 1] = v * k11;
                }
            }
        }
    }
    check_finite(out, "upsample2x");
    return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx, int64_t rows_out) {
    if (x.rank() < 2) throw ShapeError("gather_rows: rank >= 2 required");
    const int64_t n = x.shape[x.shape.size() - 2];
    const int64_t d = x.shape[x.shape.size() - 1];
    const int64_t batch = batch_count(x.shape, 2);
    if (static_cast<int64_t>(idx.size()) != batch * rows_out) {
        throw ShapeError("gather_rows: index count " + std::to_string(idx.size()) + " vs batch " +
                         std::to_string(batch) + " x rows " + std::to_string(rows_out));
    }
    Shape out_shape = x.shape;
    out_shape[out_shape.size() - 2] = rows_out;
    Tensor out(out_shape);
    for (int64_t b = 0; b < batch; ++b) {
        const double* xp = x.data.data() + b * n * d;
        double* op = out.data.data() + b * rows_out * d;
        for (int64_t r = 0; r < rows_out; ++r) {
            const int64_t src = idx[static_cast<size_t>(b * rows_out + r)];
            if (src < 0 || src >= n) throw ShapeError("gather_rows: index out of range");
            std::memcpy(op + r * d, xp + src * d, static_cast<size_t>(d) * sizeof(double));
        }
    }
    return out;
}

Tensor scatter_rows(const Tensor& x, const std::vector<int64_t>& idx, int64_t rows_out) {
    if (x.rank() < 2) throw ShapeError("scatter_rows: rank >= 2 required");
    const int64_t k = x.shape[x.shape.size() - 2];
    const int64_t d = x.shape[x.shape.size() - 1];
    const int64_t batch = batch_count(x.shape, 2);
    if (static_cast<int64_t>(idx.size()) != batch * k) {
        throw ShapeError("scatter_rows: index count " + std::to_string(idx.size()) + " vs batch " +
                         std::to_string(batch) + " x rows " + std::to_string(k));
    }
    Shape out_shape = x.shape;
    out_shape[out_shape.size() - 2] = rows_out;
    Tensor out(out_shape);
    for (int64_t b = 0; b < batch; ++b) {
        const double* xp = x.data.data() + b * k * d;
        double* op = out.data.data() + b * rows_out * d;
        for (int64_t r = 0; r < k; ++r) {
            const int64_t dst = idx[static_cast<size_t>(b * k + r)];
            if (dst < 0 || dst >= rows_out) throw ShapeError("scatter_rows: index out of range");
            std::memcpy(op + dst * d, xp + r * d, static_cast<size_t>(d) * sizeof(double));
        }
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data) acc += v;
    Tensor out({1});
    out.data[0] = acc;
    check_finite(out, "sum_all");
    return out;
}

Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
    if (g.shape == target) return g;
    if (!is_suffix(target, g.shape)) {
        throw ShapeError("reduce_to_shape: " + shape_str(target) + " is not a suffix of " +
                         shape_str(g.shape));
    }
    const int64_t bn = numel(target);
    Tensor out(target);
    for (int64_t i = 0; i < g.size(); ++i) {
        out.data[static_cast<size_t>(i % bn)] += g.data[static_cast<size_t>(i)];
    }
    return out;
}

}  // namespace vitfreeze::ops
