// Microbenchmarks for the hot paths: batched matmul, descriptor extraction,
// taped encoder forward, and the full forward+loss+backward step as the
// frozen prefix grows.  Run the binary directly; it is not part of ctest.

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "vitfreeze/config.hpp"
#include "vitfreeze/dataset.hpp"
#include "vitfreeze/hog.hpp"
#include "vitfreeze/loss.hpp"
#include "vitfreeze/rng.hpp"
#include "vitfreeze/tensor_ops.hpp"
#include "vitfreeze/trainer.hpp"

using namespace vitfreeze;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (double& x : t.data) x = rng.normal(0.0, 1.0);
    return t;
}

// One shared small-scale rig: batch 8 keeps a single step around 100 ms.
struct Rig {
    RunConfig rc;
    std::vector<PreparedImage> data;
    std::unique_ptr<Trainer> tr;
    StepBatch sb;

    Rig() {
        rc = preset_config("vit-toy");
        rc.trainer.batch_size = 8;
        rc.data.count = 8;
        rc.validate();
        auto imgs = synth_dataset(derive_seed(rc.trainer.seed, 0xda7aull), rc.data.count,
                                  rc.model.channels, rc.model.image_size, rc.model.image_size);
        data = prepare_images(imgs, rc.model.patch_size, rc.model.supervision_scales,
                              rc.model.hog);
        tr = std::make_unique<Trainer>(rc, data);
        sb = tr->prepare_step(1);
    }
};

Rig& rig() {
    static Rig r;
    return r;
}

LossResult forward_loss(Exec& ex, int frozen_prefix) {
    Rig& r = rig();
    VitMimModel& m = r.tr->model();
    auto taps = m.encoder_forward(ex, r.sb.visible, r.sb.posemb, frozen_prefix, 4);
    std::vector<ScaleLossInput> ins;
    for (const auto& hd : r.sb.heads) {
        const DecoderHead& head = m.heads()[static_cast<size_t>(hd.head)];
        ScaleLossInput in;
        in.tap = head.tap;
        in.weight = 1.0;
        in.pred = m.decoder_forward(ex, hd.head, taps.at(head.tap), r.sb.vis_idx, r.sb.mask_idx,
                                    r.rc.trainer.batch_size);
        in.target = hd.target;
        in.mask = hd.mask;
        in.mask_count = hd.mask_count;
        ins.push_back(std::move(in));
    }
    return local_mim_loss(ex, ins);
}

}  // namespace

static void BM_MatmulBatched(benchmark::State& state) {
    // the toy attention shape: per-head scores over 16 visible tokens
    const Tensor a = random_tensor({8, 64, 64}, 1);
    const Tensor b = random_tensor({64, 64}, 2);
    for (auto _ : state) {
        Tensor c = ops::matmul(a, b);
        benchmark::DoNotOptimize(c.data.data());
    }
}
BENCHMARK(BM_MatmulBatched)->Unit(benchmark::kMicrosecond);

static void BM_HogFeatures(benchmark::State& state) {
    const Tensor img = synth_image(5, 3, 64, 64);
    const HogConfig cfg;
    for (auto _ : state) {
        Tensor f = hog_features(img, 8, cfg, true);
        benchmark::DoNotOptimize(f.data.data());
    }
}
BENCHMARK(BM_HogFeatures)->Unit(benchmark::kMicrosecond);

static void BM_EncoderForwardTaped(benchmark::State& state) {
    Rig& r = rig();
    const int prefix = static_cast<int>(state.range(0));
    for (auto _ : state) {
        Tape tape;
        Exec ex(&tape);
        auto taps = r.tr->model().encoder_forward(ex, r.sb.visible, r.sb.posemb, prefix, 4);
        benchmark::DoNotOptimize(taps.at(4).v);
    }
}
BENCHMARK(BM_EncoderForwardTaped)->DenseRange(0, 5, 1)->Unit(benchmark::kMillisecond);

static void BM_StepBackward(benchmark::State& state) {
    const int prefix = static_cast<int>(state.range(0));
    for (auto _ : state) {
        Tape tape;
        Exec ex(&tape);
        LossResult loss = forward_loss(ex, prefix);
        auto grads = tape.backward(loss.total.n);
        benchmark::DoNotOptimize(grads.size());
    }
}
BENCHMARK(BM_StepBackward)->DenseRange(0, 5, 1)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
    Rig& r = rig();
    RunConfig rc = r.rc;
    rc.trainer.steps = 1;
    rc.schedule.t0 = 1.0;
    for (auto _ : state) {
        state.PauseTiming();
        Trainer tr(rc, r.data);
        state.ResumeTiming();
        TrainReport rep = tr.run();
        benchmark::DoNotOptimize(rep.loss_trace.data());
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
