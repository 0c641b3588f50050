#pragma once

#include <string>
#include <vector>

#include "hutk/common.hpp"

namespace hutk {

struct Waveform {
    std::vector<float> samples;
    int sample_rate = 16000;
};

// Reads a RIFF/WAVE file. Accepts PCM-16 mono at 16 kHz only; anything else
// is rejected rather than converted. Samples are scaled by 1/32768.
Waveform read_wav(const std::string& path);

// Writes PCM-16 mono. Samples are clamped to [-1, 1] and rounded.
void write_wav(const std::string& path, const Waveform& w);

}  // namespace hutk
