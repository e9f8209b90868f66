#include "vitfreeze/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace vitfreeze {

namespace {

void check_t0(double t0) {
    if (!(t0 > 0.0 && t0 <= 1.0)) {
        throw ConfigError("schedule.t0 must be in (0,1], got " + std::to_string(t0));
    }
}

}  // namespace

void ScheduleConfig::validate() const {
    check_t0(t0);
    if (num_layers < 2) {
        throw ConfigError("schedule.num_layers must be >= 2, got " + std::to_string(num_layers));
    }
    if (base_lr <= 0.0) {
        throw ConfigError("schedule.base_lr must be > 0, got " + std::to_string(base_lr));
    }
    if (total_steps < 1) {
        throw ConfigError("schedule.total_steps must be >= 1, got " + std::to_string(total_steps));
    }
    const auto times = compute_freeze_times(num_layers, t0, spacing);
    if (!(warmup_fraction >= 0.0 && warmup_fraction < times.front())) {
        throw ConfigError("schedule.warmup_fraction must be in [0, first freeze time " +
                          std::to_string(times.front()) + "), got " +
                          std::to_string(warmup_fraction));
    }
}

std::vector<double> compute_freeze_times(int num_layers, double t0, Spacing spacing) {
    check_t0(t0);
    if (num_layers < 2) {
        throw ConfigError("compute_freeze_times: need >= 2 layers, got " +
                          std::to_string(num_layers));
    }
    std::vector<double> t(static_cast<size_t>(num_layers));
    const double step = (1.0 - t0) / static_cast<double>(num_layers - 1);
    for (int i = 0; i < num_layers; ++i) {
        double v = t0 + static_cast<double>(i) * step;
        if (i == num_layers - 1) v = 1.0;  // pin the boundary against drift
        if (spacing == Spacing::kCubic) v = v * v * v;
        t[static_cast<size_t>(i)] = v;
    }
    return t;
}

double initial_lr(double alpha, double t_i, LrScaling scaling) {
    if (!(t_i > 0.0)) {
        throw ConfigError("initial_lr: freeze time must be > 0, got " + std::to_string(t_i));
    }
    return scaling == LrScaling::kScaled ? alpha / t_i : alpha;
}

LayerSchedule make_layer_schedule(const ScheduleConfig& cfg) {
    cfg.validate();
    LayerSchedule s;
    s.t_freeze = compute_freeze_times(cfg.num_layers, cfg.t0, cfg.spacing);
    s.alpha0.reserve(s.t_freeze.size());
    for (double t : s.t_freeze) s.alpha0.push_back(initial_lr(cfg.base_lr, t, cfg.lr_scaling));
    s.warmup = cfg.warmup_fraction;
    return s;
}

namespace {

double ramp_cosine(double a0, double w, double t_i, double t) {
    if (t >= t_i) return 0.0;
    if (t < w) return a0 * (t / w);  // w==0 can't reach here since t >= 0 => t >= w
    return 0.5 * a0 * (1.0 + std::cos(M_PI * (t - w) / (t_i - w)));
}

}  // namespace

double lr_at(const LayerSchedule& s, int layer, double t) {
    const auto u = static_cast<size_t>(layer);
    return ramp_cosine(s.alpha0[u], s.warmup, s.t_freeze[u], t);
}

double decoder_lr_at(double alpha, double warmup, double t) {
    return ramp_cosine(alpha, warmup, 1.0, t);
}

double lr_curve_integral(const LayerSchedule& s, int layer, int points) {
    points = std::max(points, 2);
    const double dt = 1.0 / static_cast<double>(points - 1);
    double acc = 0.0;
    double prev = lr_at(s, layer, 0.0);
    for (int k = 1; k < points; ++k) {
        const double cur = lr_at(s, layer, static_cast<double>(k) * dt);
        acc += 0.5 * (prev + cur) * dt;
        prev = cur;
    }
    return acc;
}

int64_t freeze_step(double t_i, int64_t total_steps) {
    // The freeze fractions carry a few ulp of error from cubing (0.8^3 * 500
    // evaluates just above the exact 256), so back the product off by a few
    // ulp before the ceil; otherwise a representation artifact would delay a
    // freeze by one step.
    const double x = t_i * static_cast<double>(total_steps);
    const double guarded = x - 8.0 * std::abs(x) * std::numeric_limits<double>::epsilon();
    const int64_t s = static_cast<int64_t>(std::ceil(guarded));
    return std::clamp<int64_t>(s, 1, total_steps);
}

FreezeEventTracker::FreezeEventTracker(const LayerSchedule& s, int64_t total_steps) {
    steps_.reserve(s.t_freeze.size());
    for (double t : s.t_freeze) steps_.push_back(freeze_step(t, total_steps));
}

std::vector<int> FreezeEventTracker::poll(int64_t step) {
    std::vector<int> fired;
    while (next_ < static_cast<int>(steps_.size()) && steps_[static_cast<size_t>(next_)] <= step) {
        fired.push_back(next_);
        ++next_;
    }
    return fired;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string fmt6(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

void export_schedule_csv(const LayerSchedule& s, std::ostream& os, int points) {
    os << "layer,t_freeze,alpha0,step,lr\n";
    for (int layer = 0; layer < s.num_layers(); ++layer) {
        const auto u = static_cast<size_t>(layer);
        for (int k = 0; k < points; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(points - 1);
            os << layer << ',' << fmt(s.t_freeze[u]) << ',' << fmt(s.alpha0[u]) << ',' << k << ','
               << fmt(lr_at(s, layer, t)) << '\n';
        }
    }
}

void export_schedule_svg(const LayerSchedule& s, std::ostream& os, int points) {
    const int width = 960, height = 540;
    const int ml = 70, mr = 20, mt = 20, mb = 45;
    const double pw = width - ml - mr, ph = height - mt - mb;
    double lr_max = 0.0;
    for (int layer = 0; layer < s.num_layers(); ++layer) {
        lr_max = std::max(lr_max, s.alpha0[static_cast<size_t>(layer)]);
    }
    if (lr_max <= 0.0) lr_max = 1.0;

    auto px = [&](double t) { return ml + t * pw; };
    auto py = [&](double lr) { return mt + (1.0 - lr / lr_max) * ph; };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 10; ++k) {
        const double t = k / 10.0;
        os << "<line x1=\"" << fmt6(px(t)) << "\" y1=\"" << mt + ph << "\" x2=\"" << fmt6(px(t))
           << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << fmt6(px(t)) << "\" y=\"" << mt + ph + 20
           << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt6(t) << "</text>\n";
    }
    for (int k = 0; k <= 5; ++k) {
        const double lr = lr_max * k / 5.0;
        os << "<line x1=\"" << ml - 5 << "\" y1=\"" << fmt6(py(lr)) << "\" x2=\"" << ml
           << "\" y2=\"" << fmt6(py(lr)) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << fmt6(py(lr) + 4)
           << "\" font-size=\"11\" text-anchor=\"end\">" << fmt6(lr) << "</text>\n";
    }
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
       << "\" font-size=\"12\" text-anchor=\"middle\">normalized training progress t</text>\n";
    os << "<text x=\"14\" y=\"" << mt + ph / 2
       << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << mt + ph / 2
       << ")\">learning rate</text>\n";

    for (int layer = 0; layer < s.num_layers(); ++layer) {
        const int hue = (layer * 360) / std::max(1, s.num_layers());
        os << "<polyline fill=\"none\" stroke=\"hsl(" << hue << ",70%,45%)\" stroke-width=\"1.5\" points=\"";
        for (int k = 0; k < points; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(points - 1);
            if (k) os << ' ';
            os << fmt6(px(t)) << ',' << fmt6(py(lr_at(s, layer, t)));
        }
        os << "\"/>\n";
    }
    os << "</svg>\n";
}

}  // namespace vitfreeze
