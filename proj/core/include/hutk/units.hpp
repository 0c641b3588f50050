#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hutk/checkpoint.hpp"
#include "hutk/dsp.hpp"
#include "hutk/kmeans.hpp"
#include "hutk/manifest.hpp"
#include "hutk/model.hpp"

namespace hutk {

struct LabeledUtterance {
    std::string id;
    UnitSequence units;  // one label per encoder frame
};

struct LabelResult {
    std::vector<LabeledUtterance> labeled;
    std::vector<std::string> skipped;  // too short for one encoder frame
};

// Assigns acoustic features to codebook units at the feature rate, keeps every
// 2nd label to land on the encoder frame rate, then truncates or repeats the
// last label so each sequence length equals the encoder output length.
LabelResult label_corpus(const Manifest& manifest, const Codebook& codebook,
                         const ModelConfig& model_cfg,
                         const DspConfig& dsp_cfg = {});

struct RefineResult {
    Codebook codebook;
    std::vector<LabeledUtterance> labeled;
    std::vector<std::string> skipped;
};

// Re-clusters on the encoder's own hidden states: runs the model without
// masking, pools the chosen transformer layer's outputs across the corpus,
// fits a fresh codebook, and relabels every utterance at the encoder rate.
RefineResult refine_units(const Checkpoint& checkpoint,
                          const Manifest& manifest, int64_t layer_index,
                          int64_t k, uint64_t seed, int64_t max_iter = 100,
                          double tol = 1e-6);

}  // namespace hutk
