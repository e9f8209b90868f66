#pragma once

#include <cstdint>
#include <vector>

#include "vitfreeze/tensor.hpp"

// Pure forward kernels.  Both the recording (autodiff) path and the
// inference-mode path of frozen layers call these same functions, so forward
// values never depend on whether a layer is being trained.

namespace vitfreeze::ops {

// Raw GEMM kernels, row-major.  `accumulate` adds into c instead of
// overwriting; the nt/tn variants implement C = A·Bᵀ and C = Aᵀ·B and are
// what matmul's backward uses.
void matmul_nn(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate = false);  // a[m,k] b[n,k]
void matmul_tn(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate = false);  // a[k,m] b[k,n]

// Elementwise with trailing-suffix broadcast: b.shape must equal the trailing
// suffix of a.shape (bias rows, scalar terms).  Full-shape match is the
// common case.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// Batched matrix product over the last two axes: a is [...,m,k]; b is either
// [k,n] (shared across the batch) or [...,k,n] with identical leading dims.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a, const std::vector<int64_t>& perm);
Tensor reshape(const Tensor& a, Shape target);

// Normalizes the last axis; optionally returns per-row mean and 1/std for
// the backward pass.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  std::vector<double>* save_mean = nullptr,
                  std::vector<double>* save_rstd = nullptr);

Tensor softmax_last(const Tensor& x);

enum class GeluMode { kTanh, kErf };
Tensor gelu(const Tensor& x, GeluMode mode);
double gelu_scalar(double x, GeluMode mode);
double gelu_grad_scalar(double x, GeluMode mode);

// 2x2 mean over the last two axes; both must be even.
Tensor avgpool2x(const Tensor& x);
// Per-channel 2x2 stride-2 transposed convolution: x is [...,C,H,W], kernel
// is [C,2,2], output [...,C,2H,2W].  Stride equals kernel size, so each
// output cell is touched exactly once.
Tensor upsample2x(const Tensor& x, const Tensor& kernel);

// Row selection along axis -2.  x is [...,N,D]; idx holds one index list per
// batch element, flattened: idx.size() = batch * rows_out, entries in [0,N).
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx, int64_t rows_out);
// Inverse placement: x is [...,K,D]; output [...,rows_out,D] with row
// idx[b*K + k] of batch b set from x's row k, all other rows zero.
Tensor scatter_rows(const Tensor& x, const std::vector<int64_t>& idx, int64_t rows_out);

Tensor sum_all(const Tensor& x);  // -> shape [1]

// Sums g over leading axes until its shape equals `target` (the adjoint of
// trailing-suffix broadcast).
Tensor reduce_to_shape(const Tensor& g, const Shape& target);

// Shape helpers shared by ops and the cost model.
int64_t batch_count(const Shape& s, int64_t trailing_dims);
Shape suffix(const Shape& s, int64_t n);

}  // namespace vitfreeze::ops
