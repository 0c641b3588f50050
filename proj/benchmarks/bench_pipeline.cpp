// Microbenchmarks for the pipeline's hot paths: feature extraction, the conv
// and transformer forward passes, a full pretraining step, the alignment-free
// loss, clustering, and scoring. Each fixture is built once outside the timed
// loop and reused across iterations.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <string>
#include <vector>

#include "hutk/ctc.hpp"
#include "hutk/dsp.hpp"
#include "hutk/eval.hpp"
#include "hutk/kmeans.hpp"
#include "hutk/model.hpp"
#include "hutk/rng.hpp"
#include "hutk/synth.hpp"
#include "hutk/tensor.hpp"
#include "hutk/train.hpp"

using namespace hutk;

namespace {

Waveform one_second_audio() {
    SynthUtterance u = synth_utterance(0, 42);
    Waveform w;
    w.sample_rate = 16000;
    w.samples = u.samples;
    w.samples.resize(16000, 0.0f);
    return w;
}

ModelConfig toy_config() { return ModelConfig::preset_config("TOY", 16, 30); }

}  // namespace

static void BM_MfccOneSecond(benchmark::State& state) {
    const Waveform w = one_second_audio();
    const DspConfig cfg;
    for (auto _ : state) {
        FeatureSequence f = mfcc(w, cfg);
        benchmark::DoNotOptimize(f.frames.data.data());
    }
}
BENCHMARK(BM_MfccOneSecond)->Unit(benchmark::kMillisecond);

static void BM_ConvFrontendForward(benchmark::State& state) {
    const Waveform w = one_second_audio();
    const ModelConfig cfg = toy_config();
    const ModelState<float> mstate = init_model_state<float>(cfg, 1);
    for (auto _ : state) {
        Tape<float> tape(false);
        const BoundModel<float> bm = bind_model(tape, mstate, cfg);
        const auto hidden = extract_features(bm, tape.leaf(waveform_tensor<float>(w.samples)));
        benchmark::DoNotOptimize(tape.value_tensor(hidden).data.data());
    }
}
BENCHMARK(BM_ConvFrontendForward)->Unit(benchmark::kMillisecond);

static void BM_EncoderForward(benchmark::State& state) {
    const Waveform w = one_second_audio();
    const ModelConfig cfg = toy_config();
    const ModelState<float> mstate = init_model_state<float>(cfg, 1);
    for (auto _ : state) {
        Tape<float> tape(false);
        const BoundModel<float> bm = bind_model(tape, mstate, cfg);
        const auto hidden = extract_features(bm, tape.leaf(waveform_tensor<float>(w.samples)));
        const auto enc = encode(bm, hidden);
        const auto logits = unit_logits(bm, enc.layer_outputs.back());
        benchmark::DoNotOptimize(tape.value_tensor(logits).data.data());
    }
}
BENCHMARK(BM_EncoderForward)->Unit(benchmark::kMillisecond);

static void BM_PretrainStep(benchmark::State& state) {
    const Waveform w = one_second_audio();
    const ModelConfig cfg = toy_config();
    ModelState<float> mstate = init_model_state<float>(cfg, 1);
    OptState opt = OptState::init(mstate);
    const OptConfig opt_cfg;
    const MaskSpec mask_spec;
    const int64_t enc_len = output_length(cfg, static_cast<int64_t>(w.samples.size()));
    Rng rng(7);
    std::vector<int> labels(static_cast<size_t>(enc_len));
    for (auto& l : labels) l = static_cast<int>(rng.uniform_int(cfg.num_units));
    for (auto _ : state) {
        Tape<float> tape(true);
        const BoundModel<float> bm = bind_model(tape, mstate, cfg);
        const auto hidden = extract_features(bm, tape.leaf(waveform_tensor<float>(w.samples)));
        const std::vector<int64_t> masked = sample_mask(enc_len, mask_spec, rng);
        const auto enc = encode(bm, hidden, masked);
        const auto logits = unit_logits(bm, enc.layer_outputs.back());
        const auto loss_id = masked_unit_loss(tape, logits, labels, masked);
        tape.backward(loss_id);
        std::vector<Tensor<float>> grads;
        grads.reserve(mstate.names.size());
        for (const auto& name : mstate.names) {
            grads.push_back(tape.grad_tensor(bm.p(name)));
        }
        adam_step(mstate, opt, grads, opt_cfg);
        benchmark::DoNotOptimize(mstate.tensors[0].data.data());
    }
}
BENCHMARK(BM_PretrainStep)->Unit(benchmark::kMillisecond);

static void BM_CtcLossWithGrad(benchmark::State& state) {
    const int64_t t = 49;
    const int64_t v = 31;
    Rng rng(3);
    Tensor<float> log_probs = Tensor<float>::gaussian({t, v}, rng, 1.0f);
    std::vector<uint16_t> target;
    for (int i = 0; i < 12; ++i) {
        target.push_back(static_cast<uint16_t>(1 + rng.uniform_int(v - 1)));
    }
    for (auto _ : state) {
        Tensor<float> grad;
        const double loss = ctc_loss(log_probs, target, &grad);
        benchmark::DoNotOptimize(loss);
        benchmark::DoNotOptimize(grad.data.data());
    }
}
BENCHMARK(BM_CtcLossWithGrad);

static void BM_KmeansFit(benchmark::State& state) {
    Rng rng(5);
    Tensor<float> points = Tensor<float>::gaussian({512, 39}, rng, 1.0f);
    for (auto _ : state) {
        Codebook cb = kmeans_fit(points, 16, 11, 5, 0.0);
        benchmark::DoNotOptimize(cb.centroids.data.data());
    }
}
BENCHMARK(BM_KmeansFit)->Unit(benchmark::kMillisecond);

static void BM_EditDistanceWords(benchmark::State& state) {
    const auto& lexicon = synth_lexicon();
    Rng rng(9);
    std::vector<std::string> ref;
    std::vector<std::string> hyp;
    for (int i = 0; i < 40; ++i) {
        ref.push_back(lexicon[rng.uniform_int(lexicon.size())]);
        hyp.push_back(lexicon[rng.uniform_int(lexicon.size())]);
    }
    for (auto _ : state) {
        EditOps ops = edit_distance(ref, hyp);
        benchmark::DoNotOptimize(ops);
    }
}
BENCHMARK(BM_EditDistanceWords);

BENCHMARK_MAIN();
