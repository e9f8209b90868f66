#include "vitfreeze/optimizer.hpp"

#include <cmath>

namespace vitfreeze {

int64_t AdamW::steps_for(const Tensor* param) const {
    auto it = state_.find(param);
    return it == state_.end() ? 0 : it->second.t;
}

void AdamW::step(Tensor& param, const Tensor& grad, double lr) {
    require(param.shape == grad.shape, "adamw: parameter " + shape_str(param.shape) +
                                           " vs gradient " + shape_str(grad.shape));
    require(param.requires_grad, "adamw: refusing to update a non-trainable parameter");
    Moments& st = state_[&param];
    if (st.m.empty()) {
        st.m.assign(param.data.size(), 0.0);
        st.v.assign(param.data.size(), 0.0);
    }
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
    const bool decay = param.rank() >= 2 && cfg_.weight_decay > 0.0;
    for (size_t i = 0; i < param.data.size(); ++i) {
        const double g = grad.data[i];
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        double upd = mhat / (std::sqrt(vhat) + cfg_.eps);
        if (decay) upd += cfg_.weight_decay * param.data[i];
        param.data[i] -= lr * upd;
    }
}

}  // namespace vitfreeze
