#include "hutk/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hutk/charset.hpp"
#include "hutk/ctc.hpp"
#include "hutk/eval.hpp"
#include "hutk/wav.hpp"

namespace hutk {

namespace {

bool is_extractor_param(const std::string& name) {
    return name.starts_with("conv") || name.starts_with("proj.");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::vector<Tensor<float>> collect_grads(Tape<float>& tape, const BoundModel<float>& bm,
                                         const ModelState<float>& state) {
    std::vector<Tensor<float>> grads;
    grads.reserve(state.names.size());
    for (const auto& name : state.names) {
        grads.push_back(tape.grad_tensor(bm.p(name)));
    }
    return grads;
}

void append_log(std::vector<TrainLogPoint>& curve, int64_t step, int64_t steps, int64_t log_every,
                double loss, double metric) {
    if (step % log_every == 0 || step + 1 == steps) {
        curve.push_back({step, loss, metric});
    }
}

struct TrainUtterance {
    std::string id;
    std::vector<float> samples;
    std::vector<int> unit_labels;    // self-supervised targets, one per frame
    std::vector<uint16_t> target;    // character ids for CTC
    std::string reference;           // normalized transcript
    int64_t enc_len = 0;
    Tensor<float> hidden;            // cached extractor output when frozen
    bool decodable = true;           // audio long enough for one frame
};

// Extractor output for one waveform with gradients disabled.
Tensor<float> extractor_output(const ModelState<float>& state, const ModelConfig& cfg,
                               const std::vector<float>& samples) {
    Tape<float> tape(false);
    const BoundModel<float> bm = bind_model(tape, state, cfg);
    const auto h = extract_features(bm, tape.leaf(waveform_tensor<float>(samples)));
    return tape.value_tensor(h);
}

// Greedy transcription of one utterance with the current parameters. Uses the
// cached extractor output when one is present.
std::string transcribe(const ModelState<float>& state, const ModelConfig& cfg,
                       const TrainUtterance& u, bool use_cached_hidden) {
    if (!u.decodable) {
        return "";
    }
    Tape<float> tape(false);
    const BoundModel<float> bm = bind_model(tape, state, cfg);
    typename Tape<float>::Id hidden =
        use_cached_hidden ? tape.leaf_ref(u.hidden.data.data(), u.hidden.shape)
                          : extract_features(bm, tape.leaf(waveform_tensor<float>(u.samples)));
    const auto enc = encode(bm, hidden);
    const auto logp = tape.log_softmax_rows(char_logits(bm, enc.layer_outputs.back()));
    return greedy_decode(tape.value_tensor(logp));
}

double corpus_greedy_wer(const ModelState<float>& state, const ModelConfig& cfg,
                         const std::vector<TrainUtterance>& eval_set, bool use_cached_hidden) {
    std::vector<EvalPair> pairs;
    pairs.reserve(eval_set.size());
    for (const auto& u : eval_set) {
        pairs.push_back({u.id, u.reference, transcribe(state, cfg, u, use_cached_hidden)});
    }
    return score_corpus(pairs).wer;
}

std::string checkpoint_step_path(const std::string& dir, int64_t updates) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_step%06lld.hutk", static_cast<long long>(updates));
    return (std::filesystem::path(dir) / buf).string();
}

}  // namespace

void write_curve_csv(const std::string& path, const std::string& metric_name,
                     const std::vector<TrainLogPoint>& curve) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::IoError, "cannot open for writing: " + path);
    out << "step,loss," << metric_name << "\n";
    for (const auto& p : curve) {
        out << p.step << "," << format_double(p.loss) << "," << format_double(p.metric) << "\n";
    }
    out.close();
    require(out.good(), ErrorCode::IoError, "write failed: " + path);
}

PretrainResult pretrain_loop(const Manifest& manifest, const std::vector<LabeledUtterance>& labels,
                             const ModelConfig& cfg, uint64_t init_seed,
                             const PretrainOptions& options) {
    cfg.validate();
    require(options.steps >= 0 && options.log_every >= 1 && options.checkpoint_every >= 0,
            ErrorCode::BadConfig, "pretrain: steps/log_every/checkpoint_every out of range");
    require(!manifest.records.empty(), ErrorCode::BadConfig, "pretrain: manifest has no utterances");

    std::map<std::string, const LabeledUtterance*> by_id;
    for (const auto& l : labels) {
        by_id.emplace(l.id, &l);
    }

    std::vector<TrainUtterance> data;
    data.reserve(manifest.records.size());
    for (const auto& rec : manifest.records) {
        const auto it = by_id.find(rec.id);
        require(it != by_id.end(), ErrorCode::MissingLabels,
                "no unit labels for utterance '" + rec.id + "'");
        TrainUtterance u;
        u.id = rec.id;
        u.samples = read_wav(rec.resolved_path).samples;
        u.enc_len = output_length(cfg, static_cast<int64_t>(u.samples.size()));
        require(u.enc_len <= cfg.max_positions, ErrorCode::SequenceTooLong,
                "utterance '" + rec.id + "' yields " + std::to_string(u.enc_len) +
                    " frames but max_positions is " + std::to_string(cfg.max_positions));
        const auto& units = it->second->units.units;
        require(static_cast<int64_t>(units.size()) == u.enc_len, ErrorCode::ShapeMismatch,
                "utterance '" + rec.id + "' has " + std::to_string(units.size()) +
                    " unit labels but the encoder yields " + std::to_string(u.enc_len) + " frames");
        u.unit_labels.reserve(units.size());
        for (const uint16_t unit : units) {
            require(unit < cfg.num_units, ErrorCode::TargetOutOfRange,
                    "unit label " + std::to_string(unit) + " in utterance '" + rec.id +
                        "' is outside the codebook of " + std::to_string(cfg.num_units));
            u.unit_labels.push_back(static_cast<int>(unit));
        }
        data.push_back(std::move(u));
    }

    ModelState<float> state = init_model_state<float>(cfg, init_seed);
    OptState opt = OptState::init(state);
    Rng mask_rng(options.mask_seed);
    if (!options.checkpoint_dir.empty()) {
        std::filesystem::create_directories(options.checkpoint_dir);
    }

    PretrainResult result;
    for (int64_t step = 0; step < options.steps; ++step) {
        const TrainUtterance& u = data[static_cast<size_t>(step % static_cast<int64_t>(data.size()))];
        Tape<float> tape(true);
        const BoundModel<float> bm = bind_model(tape, state, cfg);
        const auto hidden = extract_features(bm, tape.leaf(waveform_tensor<float>(u.samples)));
        const std::vector<int64_t> masked = sample_mask(u.enc_len, options.mask, mask_rng);
        const auto enc = encode(bm, hidden, masked);
        const auto logits = unit_logits(bm, enc.layer_outputs.back());
        const auto loss_id = masked_unit_loss(tape, logits, u.unit_labels, masked);
        const double loss = static_cast<double>(tape.scalar_value(loss_id));
        require(std::isfinite(loss), ErrorCode::NonFinite,
                "non-finite loss at step " + std::to_string(step));
        const double acc = masked_accuracy(tape, logits, u.unit_labels, masked);
        tape.backward(loss_id);
        std::vector<Tensor<float>> grads = collect_grads(tape, bm, state);
        adam_step(state, opt, grads, options.opt);
        append_log(result.curve, step, options.steps, options.log_every, loss, acc);
        if (!options.checkpoint_dir.empty() && options.checkpoint_every > 0 &&
            (step + 1) % options.checkpoint_every == 0 && step + 1 < options.steps) {
            write_checkpoint(checkpoint_step_path(options.checkpoint_dir, step + 1), cfg, state);
        }
    }

    if (!options.checkpoint_dir.empty()) {
        write_checkpoint((std::filesystem::path(options.checkpoint_dir) / "ckpt_final.hutk").string(),
                         cfg, state);
    }
    if (!options.curve_path.empty()) {
        write_curve_csv(options.curve_path, "masked_acc", result.curve);
    }
    result.checkpoint = Checkpoint{cfg, std::move(state)};
    return result;
}

namespace {

// Loads audio plus normalized transcript; the CTC target is filled in only
// when the transcript is needed for training.
TrainUtterance load_transcribed(const ManifestRecord& rec, const ModelConfig& cfg) {
    TrainUtterance u;
    u.id = rec.id;
    u.reference = normalize_transcript(rec.transcript);
    require(!u.reference.empty(), ErrorCode::EmptyReference,
            "transcript for utterance '" + rec.id + "' normalizes to empty text");
    u.samples = read_wav(rec.resolved_path).samples;
    if (static_cast<int64_t>(u.samples.size()) < cfg.receptive_field()) {
        u.decodable = false;
        return u;
    }
    u.enc_len = output_length(cfg, static_cast<int64_t>(u.samples.size()));
    require(u.enc_len <= cfg.max_positions, ErrorCode::SequenceTooLong,
            "utterance '" + rec.id + "' yields " + std::to_string(u.enc_len) +
                " frames but max_positions is " + std::to_string(cfg.max_positions));
    return u;
}

}  // namespace

FinetuneResult finetune_loop(const Manifest& manifest, const Checkpoint& init,
                             const FinetuneOptions& options, const Manifest* eval_manifest) {
    const ModelConfig& cfg = init.config;
    cfg.validate();
    require(cfg.charset_size == charset_size(), ErrorCode::BadConfig,
            "finetune: model emits " + std::to_string(cfg.charset_size) +
                " symbols but the text pipeline expects " + std::to_string(charset_size()));
    require(options.steps >= 0 && options.log_every >= 1, ErrorCode::BadConfig,
            "finetune: steps/log_every out of range");
    require_transcripts(manifest);
    if (eval_manifest != nullptr) {
        require_transcripts(*eval_manifest);
    }

    ModelState<float> state = init.state;
    {
        Rng head_rng(options.head_seed);
        Tensor<float>& w = state.param("char_head.w");
        w = Tensor<float>::gaussian(w.shape, head_rng, 0.01);
        Tensor<float>& b = state.param("char_head.b");
        b = Tensor<float>::zeros(b.shape);
    }

    FinetuneResult result;
    std::vector<TrainUtterance> train;
    std::vector<TrainUtterance> held_out;  // used only with a separate eval manifest
    for (const auto& rec : manifest.records) {
        TrainUtterance u = load_transcribed(rec, cfg);
        u.target = encode_transcript(u.reference);
        const bool feasible =
            u.decodable && ctc_detail::min_alignable_frames(u.target) <= u.enc_len;
        if (!feasible) {
            result.skipped.push_back(u.id);
            if (eval_manifest != nullptr) {
                continue;  // plays no role: neither trained nor scored
            }
            u.target.clear();  // kept for evaluation only
        }
        if (options.freeze_extractor && u.decodable) {
            u.hidden = extractor_output(state, cfg, u.samples);
        }
        train.push_back(std::move(u));
    }
    // Partition: utterances with a target train; with the default eval set the
    // same vector doubles as the scoring corpus, skipped utterances included.
    std::vector<size_t> trainable;
    for (size_t i = 0; i < train.size(); ++i) {
        if (!train[i].target.empty()) {
            trainable.push_back(i);
        }
    }
    require(!trainable.empty(), ErrorCode::BadConfig,
            "finetune: no trainable utterances after skipping");

    if (eval_manifest != nullptr) {
        for (const auto& rec : eval_manifest->records) {
            TrainUtterance u = load_transcribed(rec, cfg);
            if (options.freeze_extractor && u.decodable) {
                u.hidden = extractor_output(state, cfg, u.samples);
            }
            held_out.push_back(std::move(u));
        }
    }
    const std::vector<TrainUtterance>& eval_set = eval_manifest != nullptr ? held_out : train;

    OptState opt = OptState::init(state);
    const std::function<bool(const std::string&)> trainable_pred =
        options.freeze_extractor
            ? std::function<bool(const std::string&)>(
                  [](const std::string& n) { return !is_extractor_param(n); })
            : nullptr;

    for (int64_t step = 0; step < options.steps; ++step) {
        const TrainUtterance& u =
            train[trainable[static_cast<size_t>(step % static_cast<int64_t>(trainable.size()))]];
        Tape<float> tape(true);
        const BoundModel<float> bm = bind_model(tape, state, cfg, trainable_pred);
        typename Tape<float>::Id hidden =
            options.freeze_extractor
                ? tape.leaf_ref(u.hidden.data.data(), u.hidden.shape)
                : extract_features(bm, tape.leaf(waveform_tensor<float>(u.samples)));
        const auto enc = encode(bm, hidden);
        const auto logp = tape.log_softmax_rows(char_logits(bm, enc.layer_outputs.back()));
        const double loss = ctc_backward(tape, logp, u.target);
        require(std::isfinite(loss), ErrorCode::NonFinite,
                "non-finite loss at step " + std::to_string(step));
        std::vector<Tensor<float>> grads = collect_grads(tape, bm, state);
        adam_step(state, opt, grads, options.opt);
        if (step % options.log_every == 0 || step + 1 == options.steps) {
            const double wer =
                corpus_greedy_wer(state, cfg, eval_set, options.freeze_extractor);
            result.curve.push_back({step, loss, wer});
        }
    }

    if (!options.curve_path.empty()) {
        write_curve_csv(options.curve_path, "eval_wer", result.curve);
    }
    result.checkpoint = Checkpoint{cfg, std::move(state)};
    return result;
}

DecodeResult decode_corpus(const Checkpoint& checkpoint, const Manifest& manifest) {
    const ModelConfig& cfg = checkpoint.config;
    cfg.validate();
    require(cfg.charset_size == charset_size(), ErrorCode::BadConfig,
            "decode: model emits " + std::to_string(cfg.charset_size) +
                " symbols but the text pipeline expects " + std::to_string(charset_size()));
    DecodeResult result;
    for (const auto& rec : manifest.records) {
        TrainUtterance u;
        u.id = rec.id;
        u.samples = read_wav(rec.resolved_path).samples;
        u.decodable = static_cast<int64_t>(u.samples.size()) >= cfg.receptive_field();
        if (!u.decodable) {
            result.skipped.push_back(rec.id);
        }
        result.hypotheses.emplace_back(rec.id,
                                       transcribe(checkpoint.state, cfg, u, false));
    }
    return result;
}

void write_hypotheses(const std::string& path, const DecodeResult& result) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::IoError, "cannot open for writing: " + path);
    for (const auto& [id, text] : result.hypotheses) {
        out << id << "\t" << text << "\n";
    }
    out.close();
    require(out.good(), ErrorCode::IoError, "write failed: " + path);
}

}  // namespace hutk
