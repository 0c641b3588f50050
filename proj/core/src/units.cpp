#include "hutk/units.hpp"

#include "hutk/autodiff.hpp"
#include "hutk/wav.hpp"

namespace hutk {

namespace {

std::vector<uint16_t> fit_to_length(const std::vector<uint16_t>& labels,
                                    int64_t target_len) {
    std::vector<uint16_t> out(labels.begin(),
                              labels.begin() +
                                  std::min<int64_t>(target_len, labels.size()));
    while (static_cast<int64_t>(out.size()) < target_len) {
        out.push_back(out.back());
    }
    return out;
}

}  // namespace

LabelResult label_corpus(const Manifest& manifest, const Codebook& codebook,
                         const ModelConfig& model_cfg,
                         const DspConfig& dsp_cfg) {
    LabelResult result;
    for (const ManifestRecord& record : manifest.records) {
        const Waveform wav = read_wav(record.resolved_path);
        const auto n = static_cast<int64_t>(wav.samples.size());
        if (n < model_cfg.receptive_field()) {
            result.skipped.push_back(record.id);
            continue;
        }
        const FeatureSequence features = mfcc(wav, dsp_cfg);
        const UnitSequence assigned = kmeans_assign(codebook, features);
        std::vector<uint16_t> halved;
        halved.reserve((assigned.units.size() + 1) / 2);
        for (size_t i = 0; i < assigned.units.size(); i += 2) {
            halved.push_back(assigned.units[i]);
        }
        UnitSequence units;
        units.k = codebook.k();
        units.frame_rate_hz = features.frame_rate_hz / 2;
        units.units = fit_to_length(halved, output_length(model_cfg, n));
        result.labeled.push_back({record.id, std::move(units)});
    }
    return result;
}

RefineResult refine_units(const Checkpoint& checkpoint,
                          const Manifest& manifest, int64_t layer_index,
                          int64_t k, uint64_t seed, int64_t max_iter,
                          double tol) {
    const ModelConfig& cfg = checkpoint.config;
    require(layer_index >= 0 && layer_index < cfg.n_layers,
            ErrorCode::LayerOutOfRange,
            "layer " + std::to_string(layer_index) + " outside [0, " +
                std::to_string(cfg.n_layers) + ")");

    struct UttHidden {
        std::string id;
        Tensor<float> rows;
    };
    std::vector<UttHidden> hidden;
    int64_t total_frames = 0;
    std::vector<std::string> skipped;
    for (const ManifestRecord& record : manifest.records) {
        const Waveform wav = read_wav(record.resolved_path);
        if (static_cast<int64_t>(wav.samples.size()) < cfg.receptive_field()) {
            skipped.push_back(record.id);
            continue;
        }
        Tape<float> tape(false);
        const BoundModel<float> bm = bind_model(tape, checkpoint.state, cfg);
        const auto samples = tape.leaf(waveform_tensor<float>(wav.samples));
        const auto features = extract_features(bm, samples);
        const EncodeResult<float> enc = encode(bm, features);
        const auto layer = enc.layer_outputs[static_cast<size_t>(layer_index) + 1];
        hidden.push_back({record.id, tape.value_tensor(layer)});
        total_frames += hidden.back().rows.shape[0];
    }
    require(total_frames > 0, ErrorCode::DegenerateData,
            "no utterance reaches one encoder frame");

    Tensor<float> pooled =
        Tensor<float>::zeros({total_frames, cfg.d_model});
    int64_t row = 0;
    for (const UttHidden& utt : hidden) {
        std::copy(utt.rows.data.begin(), utt.rows.data.end(),
                  pooled.data.begin() + row * cfg.d_model);
        row += utt.rows.shape[0];
    }

    RefineResult result;
    result.skipped = std::move(skipped);
    result.codebook = kmeans_fit(pooled, k, seed, static_cast<int>(max_iter), tol);
    for (const UttHidden& utt : hidden) {
        FeatureSequence seq;
        seq.frames = utt.rows;
        seq.frame_rate_hz = 50;
        seq.source = FeatureSource::hidden;
        UnitSequence units = kmeans_assign(result.codebook, seq);
        result.labeled.push_back({utt.id, std::move(units)});
    }
    return result;
}

}  // namespace hutk
