#include "vitfreeze/cost_model.hpp"

#include <algorithm>
#include <cmath>

namespace vitfreeze {

namespace {

// Forward flops of one transformer block over `tokens` tokens of width
// `dim` (multiply-accumulate counted as 2 flops; norm/softmax/activation
// costs folded in with small per-element constants).
double block_flops(double tokens, double dim, double heads, double hidden) {
    double f = 0.0;
    f += 8.0 * tokens * dim;                    // pre-attention norm
    f += 3.0 * 2.0 * tokens * dim * dim;        // q/k/v projections
    f += 2.0 * tokens * tokens * dim;           // attention scores
    f += 4.0 * heads * tokens * tokens;         // softmax
    f += 2.0 * tokens * tokens * dim;           // context aggregation
    f += 2.0 * tokens * dim * dim;              // output projection
    f += tokens * dim;                          // residual
    f += 8.0 * tokens * dim;                    // pre-mlp norm
    f += 2.0 * tokens * dim * hidden;           // fc1
    f += 10.0 * tokens * hidden;                // activation
    f += 2.0 * tokens * hidden * dim;           // fc2
    f += tokens * dim;                          // residual
    return f;
}

}  // namespace

ModelProfile build_profile(const ModelConfig& cfg, int64_t batch) {
    cfg.validate();
    ModelProfile p;
    const double b = static_cast<double>(batch);
    const double v = static_cast<double>(cfg.visible_count());
    const double n = static_cast<double>(cfg.num_patches());
    const double d = static_cast<double>(cfg.embed_dim);
    const double dd = static_cast<double>(cfg.decoder_dim);
    const double hidden = std::llround(cfg.mlp_ratio * d);
    const double dhidden = std::llround(cfg.mlp_ratio * dd);

    p.unit_forward_flops.push_back(b * (2.0 * v * static_cast<double>(cfg.patch_dim()) * d +
                                        2.0 * v * d));  // projection + bias/position add
    for (int i = 0; i < cfg.num_blocks; ++i) {
        p.unit_forward_flops.push_back(
            b * block_flops(v, d, static_cast<double>(cfg.num_heads), hidden));
    }

    const double g = static_cast<double>(cfg.grid_side());
    for (size_t hi = 0; hi < cfg.tap_layers.size(); ++hi) {
        const double s = static_cast<double>(cfg.supervision_scales[hi]);
        double f = 0.0;
        f += 2.0 * v * d * dd;  // tap projection into decoder width
        f += n * dd;            // mask-token infill + position add
        f += block_flops(n, dd, static_cast<double>(cfg.decoder_heads), dhidden);
        f += 8.0 * n * dd;      // final norm
        for (double side = g; side < s; side *= 2.0) {
            f += 2.0 * (2.0 * side) * (2.0 * side) * dd;  // 2x upsample
        }
        for (double side = g; side > s; side /= 2.0) {
            f += side * side * dd;  // 2x average pool
        }
        f += 2.0 * s * s * dd * static_cast<double>(cfg.hog.num_bins);  // bin projection
        p.head_forward_flops.push_back(b * f);
        p.head_taps.push_back(cfg.tap_layers[hi]);
    }
    return p;
}

double iteration_work(const ModelProfile& p, int frozen_prefix,
                      const std::vector<bool>& head_alive) {
    require(frozen_prefix >= 0 && frozen_prefix <= p.num_units(),
            "iteration_work: frozen prefix out of range");
    require(static_cast<int>(head_alive.size()) == p.num_heads(),
            "iteration_work: head_alive size mismatch");

    int max_tap = 0;
    bool any_alive = false;
    for (int h = 0; h < p.num_heads(); ++h) {
        if (head_alive[static_cast<size_t>(h)]) {
            any_alive = true;
            max_tap = std::max(max_tap, p.head_taps[static_cast<size_t>(h)]);
        }
    }
    // Deepest unit that must run: the last consumed tap, or the whole stack
    // when the model has no heads at all.  With heads but none alive the
    // iteration does nothing.
    int last_unit;
    if (p.num_heads() == 0) {
        last_unit = p.num_units() - 1;
    } else if (!any_alive) {
        return 0.0;
    } else {
        last_unit = max_tap;
    }

    double work = 0.0;
    for (int u = 0; u <= last_unit; ++u) {
        const double f = p.unit_forward_flops[static_cast<size_t>(u)];
        work += u < frozen_prefix ? f : f * (1.0 + p.backward_multiple);
    }
    for (int h = 0; h < p.num_heads(); ++h) {
        if (head_alive[static_cast<size_t>(h)]) {
            work += p.head_forward_flops[static_cast<size_t>(h)] * (1.0 + p.backward_multiple);
        }
    }
    return work;
}

double full_work(const ModelProfile& p) {
    return iteration_work(p, 0, std::vector<bool>(static_cast<size_t>(p.num_heads()), true));
}

double predict_speedup(const ModelProfile& p, const ScheduleConfig& sched) {
    sched.validate();
    require(sched.num_layers == p.num_units(),
            "predict_speedup: schedule layers (" + std::to_string(sched.num_layers) +
                ") vs profile units (" + std::to_string(p.num_units()) + ")");
    const std::vector<double> t_freeze =
        compute_freeze_times(sched.num_layers, sched.t0, sched.spacing);
    std::vector<int64_t> fsteps(t_freeze.size());
    for (size_t i = 0; i < t_freeze.size(); ++i) {
        fsteps[i] = freeze_step(t_freeze[i], sched.total_steps);
    }

    const double denom =
        static_cast<double>(sched.total_steps) * full_work(p);
    double total = 0.0;
    for (int64_t s = 1; s <= sched.total_steps; ++s) {
        // A layer is frozen during step s once its freeze event fired at the
        // end of an earlier step; heads die one step after their tap's unit.
        int fp = 0;
        while (fp < static_cast<int>(fsteps.size()) &&
               fsteps[static_cast<size_t>(fp)] < s) {
            ++fp;
        }
        std::vector<bool> alive(static_cast<size_t>(p.num_heads()));
        for (int h = 0; h < p.num_heads(); ++h) {
            alive[static_cast<size_t>(h)] = fp < p.head_taps[static_cast<size_t>(h)] + 1;
        }
        total += iteration_work(p, fp, alive);
    }
    return total / denom;
}

CostMeter::CostMeter(ModelProfile profile, size_t ring_capacity)
    : profile_(std::move(profile)), capacity_(std::max<size_t>(1, ring_capacity)) {
    ring_.reserve(capacity_);
}

void CostMeter::record(double wall_ms, double work) {
    if (ring_.size() < capacity_) {
        ring_.push_back(wall_ms);
    } else {
        ring_[next_] = wall_ms;
        wrapped_ = true;
    }
    next_ = (next_ + 1) % capacity_;
    cumulative_work_ += work;
    iterations_ += 1;
}

std::vector<double> CostMeter::recent_times() const {
    if (!wrapped_) return ring_;
    std::vector<double> out;
    out.reserve(ring_.size());
    for (size_t i = 0; i < ring_.size(); ++i) {
        out.push_back(ring_[(next_ + i) % ring_.size()]);
    }
    return out;
}

double CostMeter::median_recent() const {
    if (ring_.empty()) return 0.0;
    std::vector<double> v = ring_;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace vitfreeze
