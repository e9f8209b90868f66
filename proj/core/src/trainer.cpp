#include "vitfreeze/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "vitfreeze/loss.hpp"
#include "vitfreeze/masking.hpp"
#include "vitfreeze/rng.hpp"
#include "vitfreeze/tape.hpp"

namespace vitfreeze {

namespace {

int env_thread_count() {
    const char* e = std::getenv("VITFREEZE_THREADS");
    if (!e || !*e) return 0;
    const long v = std::strtol(e, nullptr, 10);
    return static_cast<int>(std::clamp<long>(v, 0, 16));
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, std::vector<PreparedImage> data)
    : cfg_(cfg),
      data_(std::move(data)),
      model_(cfg.model, cfg.trainer.seed),
      sched_(cfg.build_schedule()),
      opt_(AdamWConfig{}),
      meter_(build_profile(cfg.model, cfg.trainer.batch_size)) {
    cfg_.validate();
    require(!data_.empty(), "trainer: dataset is empty");
    const Shape expect{cfg_.model.num_patches(), cfg_.model.patch_dim()};
    require(data_.front().patches.shape == expect,
            "trainer: dataset patches " + shape_str(data_.front().patches.shape) +
                " do not match the model, expected " + shape_str(expect));
    for (const auto& img : data_) {
        for (int64_t s : cfg_.model.supervision_scales) {
            require(img.targets.per_scale.count(s) != 0,
                    "trainer: dataset lacks targets at scale " + std::to_string(s));
        }
    }
    fsteps_.reserve(sched_.t_freeze.size());
    for (double t : sched_.t_freeze) fsteps_.push_back(freeze_step(t, cfg_.trainer.steps));
    batch_seed_ = derive_seed(cfg_.trainer.seed, 0xba7c4ull);
    mask_seed_ = derive_seed(cfg_.trainer.seed, 0x3a55ull);
}

bool Trainer::head_alive_at(int head, int64_t step) const {
    const int tap = model_.heads().at(static_cast<size_t>(head)).tap;
    // The unit at the tap freezes at the end of step fsteps_[tap]; the head
    // is pruned in the same event sweep, so it still trains during that step.
    return step <= fsteps_[static_cast<size_t>(tap)];
}

int Trainer::frozen_prefix_at(int64_t step) const {
    int fp = 0;
    while (fp < static_cast<int>(fsteps_.size()) && fsteps_[static_cast<size_t>(fp)] < step) ++fp;
    return fp;
}

StepBatch Trainer::prepare_step(int64_t step) const {
    const ModelConfig& m = cfg_.model;
    const int64_t b = cfg_.trainer.batch_size;
    const int64_t n = m.num_patches();
    const int64_t v = m.visible_count();
    const int64_t mm = n - v;
    const int64_t pd = m.patch_dim();
    const int64_t g = m.grid_side();
    const int64_t bins = m.hog.num_bins;

    StepBatch sb;
    sb.step = step;
    sb.visible = Tensor({b, v, pd});
    sb.vis_idx.reserve(static_cast<size_t>(b * v));
    sb.mask_idx.reserve(static_cast<size_t>(b * mm));

    Rng pick(derive_seed(batch_seed_, static_cast<uint64_t>(step)));
    std::vector<int64_t> image_of(static_cast<size_t>(b));
    std::vector<MaskPlan> plans;
    plans.reserve(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
        image_of[static_cast<size_t>(i)] = static_cast<int64_t>(pick.below(data_.size()));
        plans.push_back(sample_mask(
            derive_seed(mask_seed_, static_cast<uint64_t>(step * b + i)), n, m.mask_ratio));
        const MaskPlan& plan = plans.back();
        const Tensor& patches = data_[static_cast<size_t>(image_of[static_cast<size_t>(i)])].patches;
        for (int64_t r = 0; r < v; ++r) {
            const int64_t src = plan.visible[static_cast<size_t>(r)];
            std::copy_n(patches.data.data() + src * pd, pd,
                        sb.visible.data.data() + (i * v + r) * pd);
            sb.vis_idx.push_back(src);
        }
        for (int64_t r = 0; r < mm; ++r) sb.mask_idx.push_back(plan.masked[static_cast<size_t>(r)]);
    }
    sb.posemb = model_.posemb_for_visible(sb.vis_idx, b);

    for (size_t h = 0; h < model_.heads().size(); ++h) {
        if (!head_alive_at(static_cast<int>(h), step)) continue;
        const int64_t s = model_.heads()[h].scale;
        StepBatch::HeadData hd;
        hd.head = static_cast<int>(h);
        hd.mask = Tensor({b, bins, s, s});
        hd.target = Tensor({b, bins, s, s});
        for (int64_t i = 0; i < b; ++i) {
            const Tensor mk = plans[static_cast<size_t>(i)].mask_at_scale(g, s);
            for (double w : mk.data) hd.mask_count += w;
            const Tensor& tgt =
                data_[static_cast<size_t>(image_of[static_cast<size_t>(i)])].targets.per_scale.at(s);
            for (int64_t bin = 0; bin < bins; ++bin) {
                std::copy_n(mk.data.data(), s * s,
                            hd.mask.data.data() + ((i * bins) + bin) * s * s);
            }
            std::copy_n(tgt.data.data(), bins * s * s, hd.target.data.data() + i * bins * s * s);
        }
        sb.heads.push_back(std::move(hd));
    }
    return sb;
}

Trainer::StepOutcome Trainer::execute_step(int64_t step, const StepBatch& sb) {
    StepOutcome out;
    const int64_t b = cfg_.trainer.batch_size;
    const double t =
        static_cast<double>(step - 1) / static_cast<double>(cfg_.trainer.steps);
    const double alpha_eff = cfg_.effective_lr();

    Tape tape;
    Exec ex(&tape);
    try {
        std::map<int, Val> taps =
            model_.encoder_forward(ex, sb.visible, sb.posemb, -1, model_.max_alive_tap());
        std::vector<ScaleLossInput> inputs;
        inputs.reserve(sb.heads.size());
        for (const StepBatch::HeadData& hd : sb.heads) {
            const DecoderHead& head = model_.heads()[static_cast<size_t>(hd.head)];
            ScaleLossInput in;
            in.tap = head.tap;
            in.weight = 1.0;
            in.pred = model_.decoder_forward(ex, hd.head, taps.at(head.tap), sb.vis_idx,
                                             sb.mask_idx, b);
            in.target = hd.target;
            in.mask = hd.mask;
            in.mask_count = hd.mask_count;
            inputs.push_back(std::move(in));
        }
        LossResult loss = local_mim_loss(ex, inputs);
        out.loss = loss.value;
        out.loss_terms = loss.per_tap_terms;
        if (!std::isfinite(loss.value)) {
            out.ok = false;
            out.error = "non-finite loss";
            return out;
        }

        std::unordered_map<NodeId, Tensor> grads = tape.backward(loss.total.n);

        // Gradients may exist only for currently-trainable parameters.
        std::unordered_map<NodeId, const Tensor*> param_of;
        param_of.reserve(model_.named_params().size());
        for (const auto& [name, p] : model_.named_params()) {
            (void)name;
            const NodeId nid = ex.node_of(*p);
            if (nid != kNoNode) param_of.emplace(nid, p);
        }
        std::unordered_map<const Tensor*, const Tensor*> grad_of;
        grad_of.reserve(grads.size());
        for (const auto& [nid, g] : grads) {
            auto it = param_of.find(nid);
            require(it != param_of.end(),
                    "trainer: gradient for a non-parameter leaf (impossible)");
            require(it->second->requires_grad,
                    "trainer: gradient for a frozen parameter (impossible)");
            grad_of.emplace(it->second, &g);
        }

        if (on_step) {
            StepObservation obs;
            obs.step = step;
            obs.loss = loss.value;
            obs.frozen_prefix = model_.frozen_prefix();
            obs.alive_heads = model_.num_alive_heads();
            obs.loss_terms = &out.loss_terms;
            obs.grads = &grad_of;
            obs.batch = &sb;
            on_step(obs);
        }

        for (const auto& [name, p] : model_.named_params()) {
            (void)name;
            auto it = grad_of.find(p);
            if (it == grad_of.end()) continue;
            const int unit = model_.unit_of(p);
            const double lr =
                unit >= 0 ? lr_at(sched_, unit, t) : decoder_lr_at(alpha_eff, sched_.warmup, t);
            opt_.step(*p, *it->second, lr);
        }
    } catch (const NumericError& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

TrainReport Trainer::run() {
    TrainReport rep;
    const int64_t total = cfg_.trainer.steps;
    rep.full_run_work = static_cast<double>(total) * meter_.full_iteration_work();
    {
        ScheduleConfig sc = cfg_.schedule;
        sc.total_steps = total;
        rep.predicted_work_ratio = predict_speedup(meter_.profile(), sc);
    }
    FreezeEventTracker tracker(sched_, total);

    const int threads = env_thread_count();
    std::vector<std::thread> workers;
    std::mutex mu;
    std::condition_variable cv_ready, cv_space;
    std::map<int64_t, StepBatch> ready;
    std::atomic<int64_t> next_claim{1};
    int64_t consumed = 0;
    bool stop = false;
    const size_t capacity = static_cast<size_t>(threads) * 2 + 2;
    if (threads > 0) {
        for (int w = 0; w < threads; ++w) {
            workers.emplace_back([&] {
                for (;;) {
                    const int64_t s = next_claim.fetch_add(1);
                    if (s > total) return;
                    StepBatch sb = prepare_step(s);
                    std::unique_lock<std::mutex> lk(mu);
                    cv_space.wait(lk, [&] {
                        return stop || s <= consumed + static_cast<int64_t>(capacity);
                    });
                    if (stop) return;
                    ready.emplace(s, std::move(sb));
                    cv_ready.notify_all();
                }
            });
        }
    }
    auto fetch = [&](int64_t s) {
        if (threads <= 0) return prepare_step(s);
        std::unique_lock<std::mutex> lk(mu);
        cv_ready.wait(lk, [&] { return ready.count(s) != 0; });
        StepBatch sb = std::move(ready.at(s));
        ready.erase(s);
        consumed = s;
        cv_space.notify_all();
        return sb;
    };
    auto shutdown = [&] {
        if (threads <= 0) return;
        {
            std::lock_guard<std::mutex> lk(mu);
            stop = true;
        }
        cv_space.notify_all();
        for (auto& w : workers) w.join();
        workers.clear();
    };

    for (int64_t s = 1; s <= total; ++s) {
        const int fp = model_.frozen_prefix();
        const int alive = model_.num_alive_heads();
        if (alive == 0) break;  // every head pruned: nothing left to train

        StepBatch sb = fetch(s);
        const auto t0 = std::chrono::steady_clock::now();
        StepOutcome outcome = execute_step(s, sb);
        const auto t1 = std::chrono::steady_clock::now();
        const double ms =
            cfg_.trainer.measure
                ? std::chrono::duration<double, std::milli>(t1 - t0).count()
                : 0.0;

        std::vector<bool> alive_mask(model_.heads().size());
        for (size_t h = 0; h < model_.heads().size(); ++h) {
            alive_mask[h] = !model_.heads()[h].pruned;
        }
        meter_.record(ms, meter_.work_for(fp, alive_mask));

        rep.loss_trace.push_back(outcome.loss);
        rep.iter_ms.push_back(ms);
        rep.frozen_prefix_trace.push_back(fp);
        rep.alive_heads_trace.push_back(alive);
        rep.steps_completed = s;

        if (!outcome.ok || !std::isfinite(outcome.loss)) {
            rep.aborted = true;
            AbortDiagnostics d;
            d.step = s;
            d.loss = outcome.loss;
            d.message = outcome.error.empty() ? "non-finite loss" : outcome.error;
            d.loss_terms = outcome.loss_terms;
            const double t = static_cast<double>(s - 1) / static_cast<double>(total);
            for (int u = 0; u < sched_.num_layers(); ++u) d.unit_lrs.push_back(lr_at(sched_, u, t));
            d.decoder_lr = decoder_lr_at(cfg_.effective_lr(), sched_.warmup, t);
            rep.abort = std::move(d);
            break;
        }

        for (int layer : tracker.poll(s)) {
            for (Tensor* p : model_.layers()[static_cast<size_t>(layer)].params) {
                opt_.drop_state(p);
            }
            model_.freeze_layer(layer, s);
            rep.freeze_events.push_back({layer, s});
        }
        for (size_t h = 0; h < model_.heads().size(); ++h) {
            if (model_.prune_decoder_if_dead(static_cast<int>(h), s)) {
                std::vector<Tensor*> ps;
                model_.heads()[h].collect(ps);
                for (Tensor* p : ps) opt_.drop_state(p);
                rep.prune_events.push_back({static_cast<int>(h), model_.heads()[h].tap, s});
            }
        }
    }
    shutdown();

    rep.executed_work = meter_.cumulative_work();
    rep.executed_work_ratio =
        rep.full_run_work > 0.0 ? rep.executed_work / rep.full_run_work : 1.0;
    return rep;
}

double measured_time_ratio(const TrainReport& run, const TrainReport& baseline, int64_t discard) {
    require(!run.iter_ms.empty() && !baseline.iter_ms.empty(),
            "measured_time_ratio: empty timing traces");

    // Baseline: single median over everything after warm-up.
    std::vector<double> base(baseline.iter_ms.begin() +
                                 std::min<size_t>(static_cast<size_t>(discard),
                                                  baseline.iter_ms.size() - 1),
                             baseline.iter_ms.end());
    const double base_med = median_of(base);
    require(base_med > 0.0, "measured_time_ratio: baseline has no recorded times");

    // Run: phase decomposition on (frozen prefix, alive heads).
    const size_t n = run.iter_ms.size();
    double total_est = 0.0;
    size_t begin = 0;
    while (begin < n) {
        size_t end = begin + 1;
        while (end < n && run.frozen_prefix_trace[end] == run.frozen_prefix_trace[begin] &&
               run.alive_heads_trace[end] == run.alive_heads_trace[begin]) {
            ++end;
        }
        std::vector<double> phase;
        for (size_t i = begin; i < end; ++i) {
            if (static_cast<int64_t>(i) < discard) continue;  // global warm-up discard
            phase.push_back(run.iter_ms[i]);
        }
        const double med = phase.empty() ? base_med : median_of(phase);
        total_est += med * static_cast<double>(end - begin);
        begin = end;
    }
    const double base_total = base_med * static_cast<double>(n);
    return total_est / base_total;
}

}  // namespace vitfreeze
