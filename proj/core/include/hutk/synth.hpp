#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hutk/manifest.hpp"

namespace hutk {

struct SynthConfig {
    int min_words = 2;
    int max_words = 4;
    double word_sec = 0.20;
    double gap_sec = 0.08;
    double edge_sec = 0.05;  // leading and trailing silence
    double ramp_sec = 0.010;
    int sample_rate = 16000;
};

// Words usable as both transcripts and acoustic symbols; every word renders as
// a fixed three-partial tone stack whose fundamental identifies the word.
const std::vector<std::string>& synth_lexicon();

std::vector<float> synth_word_samples(int word_index,
                                      const SynthConfig& cfg = {});

struct SynthUtterance {
    std::string id;
    std::string transcript;
    std::vector<float> samples;
};

// Deterministic in (index, seed) alone, so corpora are reproducible and
// utterances can be regenerated independently.
SynthUtterance synth_utterance(int64_t index, uint64_t seed,
                               const SynthConfig& cfg = {});

// Writes WAVs plus manifest.tsv into out_dir and returns the manifest.
Manifest synth_corpus(int64_t n_utts, uint64_t seed, const std::string& out_dir,
                      const SynthConfig& cfg = {});

}  // namespace hutk
