#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "vitfreeze/tensor.hpp"

namespace vitfreeze {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
};

// Adam with decoupled weight decay.  Moment buffers are keyed by parameter
// identity and carry their own step count (parameters join the optimizer at
// different times and leave when their layer freezes).  Decay applies only
// to rank>=2 tensors — weight matrices and kernels — never to biases, norm
// parameters, or other vectors.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }

    // One in-place update of `param` at learning rate `lr`.
    void step(Tensor& param, const Tensor& grad, double lr);

    // Frozen parameters can never resume training; their moments are freed.
    void drop_state(const Tensor* param) { state_.erase(param); }
    size_t num_tracked() const { return state_.size(); }
    int64_t steps_for(const Tensor* param) const;  // 0 if never updated

private:
    struct Moments {
        std::vector<double> m, v;
        int64_t t = 0;
    };
    AdamWConfig cfg_;
    std::unordered_map<const Tensor*, Moments> state_;
};

}  // namespace vitfreeze
