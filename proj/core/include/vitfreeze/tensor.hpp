#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitfreeze/errors.hpp"

namespace vitfreeze {

using Shape = std::vector<int64_t>;
using NodeId = int64_t;
inline constexpr NodeId kNoNode = -1;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles.  `node` ties a value to a tape entry
// when it participates in a recorded forward pass; kNoNode means untracked.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    NodeId node = kNoNode;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), 0.0) {}
    Tensor(Shape s, std::vector<double> d);

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int64_t rank() const { return static_cast<int64_t>(shape.size()); }
    int64_t dim(int64_t i) const { return shape[static_cast<size_t>(i)]; }

    double& at(int64_t flat) { return data[static_cast<size_t>(flat)]; }
    double at(int64_t flat) const { return data[static_cast<size_t>(flat)]; }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v);
    static Tensor from_scalar(double v) { return Tensor({1}, {v}); }
};

// Debug finiteness checking: when enabled, ops verify outputs are finite and
// throw NumericError naming the op.  Default: on in debug builds, off in
// release (it walks every output element).
void set_check_finite(bool enabled);
bool check_finite_enabled();
void check_finite(const Tensor& t, const char* op_name);

bool same_shape(const Shape& a, const Shape& b);
void require(bool cond, const std::string& msg);

}  // namespace vitfreeze
