#include "hutk/synth.hpp"

#include <cmath>
#include <filesystem>

#include "hutk/common.hpp"
#include "hutk/rng.hpp"
#include "hutk/wav.hpp"

namespace hutk {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kPartialRatios[3] = {1.0, 2.07, 3.19};
constexpr double kPartialAmps[3] = {0.30, 0.18, 0.12};

double word_fundamental_hz(int word_index) {
    return 220.0 + 130.0 * static_cast<double>(word_index);
}

uint64_t utterance_seed(int64_t index, uint64_t seed) {
    return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(index + 1));
}

std::string utterance_id(int64_t index) {
    std::string digits = std::to_string(index);
    while (digits.size() < 4) digits.insert(digits.begin(), '0');
    return "utt" + digits;
}

}  // namespace

const std::vector<std::string>& synth_lexicon() {
    static const std::vector<std::string> words = {
        "ada", "bal",  "cam",  "çay",  "dere", "efe",
        "göl", "ırmak", "kaya", "lale", "mola", "nar"};
    return words;
}

std::vector<float> synth_word_samples(int word_index, const SynthConfig& cfg) {
    require(word_index >= 0 &&
                word_index < static_cast<int>(synth_lexicon().size()),
            ErrorCode::BadConfig, "word index outside the lexicon");
    const int64_t n = std::llround(cfg.word_sec * cfg.sample_rate);
    const int64_t ramp = std::llround(cfg.ramp_sec * cfg.sample_rate);
    require(n > 2 * ramp, ErrorCode::BadConfig, "word shorter than its ramps");
    const double f0 = word_fundamental_hz(word_index);
    std::vector<float> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double tone = 0.0;
        for (int p = 0; p < 3; ++p) {
            const double freq = f0 * kPartialRatios[p];
            tone += kPartialAmps[p] *
                    std::sin(2.0 * kPi * freq * static_cast<double>(i) /
                             static_cast<double>(cfg.sample_rate));
        }
        double env = 1.0;
        if (i < ramp) {
            const double x = std::sin(kPi * static_cast<double>(i) /
                                      (2.0 * static_cast<double>(ramp)));
            env = x * x;
        } else if (i >= n - ramp) {
            const double x =
                std::sin(kPi * static_cast<double>(n - 1 - i) /
                         (2.0 * static_cast<double>(ramp)));
            env = x * x;
        }
        out[static_cast<size_t>(i)] = static_cast<float>(tone * env);
    }
    return out;
}

SynthUtterance synth_utterance(int64_t index, uint64_t seed,
                               const SynthConfig& cfg) {
    require(index >= 0, ErrorCode::BadConfig, "negative utterance index");
    require(cfg.min_words >= 1 && cfg.max_words >= cfg.min_words,
            ErrorCode::BadConfig, "bad word count range");
    Rng rng(utterance_seed(index, seed));
    const int64_t n_words =
        cfg.min_words + rng.uniform_int(cfg.max_words - cfg.min_words + 1);

    SynthUtterance utt;
    utt.id = utterance_id(index);
    const int64_t edge = std::llround(cfg.edge_sec * cfg.sample_rate);
    const int64_t gap = std::llround(cfg.gap_sec * cfg.sample_rate);
    utt.samples.assign(static_cast<size_t>(edge), 0.0f);
    for (int64_t w = 0; w < n_words; ++w) {
        const int word =
            static_cast<int>(rng.uniform_int(synth_lexicon().size()));
        if (w > 0) {
            utt.transcript.push_back(' ');
            utt.samples.insert(utt.samples.end(), static_cast<size_t>(gap), 0.0f);
        }
        utt.transcript += synth_lexicon()[static_cast<size_t>(word)];
        const auto tone = synth_word_samples(word, cfg);
        utt.samples.insert(utt.samples.end(), tone.begin(), tone.end());
    }
    utt.samples.insert(utt.samples.end(), static_cast<size_t>(edge), 0.0f);
    return utt;
}

Manifest synth_corpus(int64_t n_utts, uint64_t seed, const std::string& out_dir,
                      const SynthConfig& cfg) {
    require(n_utts >= 1, ErrorCode::BadConfig, "need at least one utterance");
    std::filesystem::create_directories(out_dir);
    Manifest manifest;
    manifest.dir = out_dir;
    for (int64_t i = 0; i < n_utts; ++i) {
        SynthUtterance utt = synth_utterance(i, seed, cfg);
        ManifestRecord record;
        record.id = utt.id;
        record.audio_path = utt.id + ".wav";
        record.resolved_path =
            (std::filesystem::path(out_dir) / record.audio_path).string();
        record.has_transcript = true;
        record.transcript = utt.transcript;
        record.line = i + 1;
        write_wav(record.resolved_path, {utt.samples, cfg.sample_rate});
        manifest.records.push_back(std::move(record));
    }
    write_manifest(manifest,
                   (std::filesystem::path(out_dir) / "manifest.tsv").string());
    return manifest;
}

}  // namespace hutk
