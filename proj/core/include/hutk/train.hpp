#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hutk/autodiff.hpp"
#include "hutk/checkpoint.hpp"
#include "hutk/manifest.hpp"
#include "hutk/model.hpp"
#include "hutk/rng.hpp"
#include "hutk/units.hpp"

namespace hutk {

struct MaskSpec {
    double mask_prob = 0.08;  // probability of each frame starting a span
    int64_t span_len = 10;
    bool force_nonempty = true;
};

// Union of [s, min(s+span_len, t)) over the given starts, sorted and unique.
std::vector<int64_t> expand_spans(const std::vector<int64_t>& starts, int64_t span_len, int64_t t);

// Independent per-frame span starts with probability mask_prob. When the
// union comes up empty and forcing is on, one random span is inserted.
std::vector<int64_t> sample_mask(int64_t t, const MaskSpec& spec, Rng& rng);

struct OptConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double clip_norm = 1.0;  // <= 0 disables clipping
};

struct OptState {
    std::vector<Tensor<float>> m;
    std::vector<Tensor<float>> v;
    int64_t t = 0;

    static OptState init(const ModelState<float>& state);
};

// Global gradient norm across all parameter gradients.
double global_grad_norm(const std::vector<Tensor<float>>& grads);

// Bias-corrected Adam with global-norm clipping applied before the moment
// update. A non-finite gradient aborts the step untouched.
void adam_step(ModelState<float>& state, OptState& opt, std::vector<Tensor<float>>& grads,
               const OptConfig& cfg);

// Mean cross-entropy of unit predictions over the masked frames only.
template <typename T>
typename Tape<T>::Id masked_unit_loss(Tape<T>& tape, typename Tape<T>::Id logits,
                                      const std::vector<int>& labels,
                                      const std::vector<int64_t>& masked) {
    require(static_cast<int64_t>(labels.size()) == tape.shape(logits)[0], ErrorCode::ShapeMismatch,
            "masked_unit_loss: labels length mismatch");
    return tape.softmax_xent_rows(logits, labels, masked);
}

// One row of a training curve. `step` counts the updates applied before the
// loss was measured, so the first row of any run reflects the initial
// parameters. `metric` is masked-prediction accuracy for self-supervised runs
// and greedy-decode corpus WER (measured after the step's update) for CTC runs.
struct TrainLogPoint {
    int64_t step = 0;
    double loss = 0.0;
    double metric = 0.0;
};

// CSV with header "step,loss,<metric_name>". Formatting is fixed so identical
// runs produce identical bytes.
void write_curve_csv(const std::string& path, const std::string& metric_name,
                     const std::vector<TrainLogPoint>& curve);

struct PretrainOptions {
    MaskSpec mask;
    OptConfig opt;
    int64_t steps = 1000;
    int64_t log_every = 10;        // curve row cadence; the final step always logs
    int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
    uint64_t mask_seed = 1;
    std::string checkpoint_dir;    // empty: no checkpoint files are written
    std::string curve_path;        // empty: curve is returned in memory only
};

struct PretrainResult {
    Checkpoint checkpoint;
    std::vector<TrainLogPoint> curve;  // metric = masked accuracy
};

// Masked-unit training from a fresh initialization. Every manifest utterance
// must carry a unit sequence whose length equals the encoder frame count for
// its audio. Utterances are visited in manifest order, one per step; each step
// samples a fresh mask, replaces the masked encoder inputs, and fits the unit
// predictions at the masked frames only. steps=0 returns the initialization
// untouched.
PretrainResult pretrain_loop(const Manifest& manifest, const std::vector<LabeledUtterance>& labels,
                             const ModelConfig& cfg, uint64_t init_seed,
                             const PretrainOptions& options);

struct FinetuneOptions {
    OptConfig opt;
    int64_t steps = 2000;
    int64_t log_every = 50;      // WER evaluation cadence; the final step always logs
    bool freeze_extractor = true;
    uint64_t head_seed = 7;      // fresh character-head initialization
    std::string curve_path;      // empty: curve is returned in memory only
};

struct FinetuneResult {
    Checkpoint checkpoint;
    std::vector<TrainLogPoint> curve;  // metric = greedy-decode corpus WER
    // Utterances excluded from training: audio too short for one encoder
    // frame, or transcript not alignable in the available frames. Each is
    // warned about once; the warning count is this vector's size.
    std::vector<std::string> skipped;
};

// Character-level CTC training on top of a checkpoint. The character head is
// re-initialized from head_seed before any step runs, so steps=0 yields the
// input model with a fresh head. With freeze_extractor the conv front end and
// its projection stay bitwise-unchanged and their outputs are computed once
// per utterance. WER is scored against eval_manifest when given, otherwise
// against the training manifest; both need transcripts that normalize to
// non-empty text.
FinetuneResult finetune_loop(const Manifest& manifest, const Checkpoint& init,
                             const FinetuneOptions& options,
                             const Manifest* eval_manifest = nullptr);

struct DecodeResult {
    // (id, hypothesis) in manifest order. Utterances too short to produce a
    // frame get an empty hypothesis and are listed in skipped.
    std::vector<std::pair<std::string, std::string>> hypotheses;
    std::vector<std::string> skipped;
};

// Greedy best-path transcription of every manifest utterance.
DecodeResult decode_corpus(const Checkpoint& checkpoint, const Manifest& manifest);

// TSV rows id<TAB>hypothesis in the result's order.
void write_hypotheses(const std::string& path, const DecodeResult& result);

// Fraction of masked frames whose argmax prediction equals the label.
template <typename T>
double masked_accuracy(Tape<T>& tape, typename Tape<T>::Id logits, const std::vector<int>& labels,
                       const std::vector<int64_t>& masked) {
    require(!masked.empty(), ErrorCode::EmptyMaskSet, "masked_accuracy: no masked frames");
    const int64_t k = tape.shape(logits)[1];
    const T* p = tape.val(logits);
    int64_t hit = 0;
    for (int64_t r : masked) {
        int64_t best = 0;
        for (int64_t j = 1; j < k; ++j) {
            if (p[r * k + j] > p[r * k + best]) {
                best = j;
            }
        }
        if (best == labels[static_cast<size_t>(r)]) {
            ++hit;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(masked.size());
}

}  // namespace hutk
