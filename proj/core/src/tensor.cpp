#include "vitfreeze/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace vitfreeze {

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::full(Shape s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
}

namespace {
#ifdef NDEBUG
std::atomic<bool> g_check_finite{false};
#else
std::atomic<bool> g_check_finite{true};
#endif
}  // namespace

void set_check_finite(bool enabled) { g_check_finite.store(enabled); }
bool check_finite_enabled() { return g_check_finite.load(); }

void check_finite(const Tensor& t, const char* op_name) {
    if (!g_check_finite.load()) return;
    for (double x : t.data) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string("non-finite value produced by op '") + op_name +
                               "' with output shape " + shape_str(t.shape));
        }
    }
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace vitfreeze
