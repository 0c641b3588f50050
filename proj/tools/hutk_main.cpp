// Command-line front end chaining the pipeline stages:
//   synth -> mfcc -> kmeans -> label -> pretrain -> [refine] -> finetune
//         -> decode -> eval/analyze
// Every stage is a pure function of its input files plus the seeds given on
// the command line, so re-running a stage reproduces its artifacts byte for
// byte.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hutk/charset.hpp"
#include "hutk/checkpoint.hpp"
#include "hutk/common.hpp"
#include "hutk/dsp.hpp"
#include "hutk/eval.hpp"
#include "hutk/kmeans.hpp"
#include "hutk/manifest.hpp"
#include "hutk/model.hpp"
#include "hutk/synth.hpp"
#include "hutk/train.hpp"
#include "hutk/units.hpp"
#include "hutk/wav.hpp"

namespace {

namespace fs = std::filesystem;
using hutk::require;

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), hutk::ErrorCode::IoError, "cannot open for writing: " + path);
    out << text;
    out.close();
    require(out.good(), hutk::ErrorCode::IoError, "write failed: " + path);
}

void report_skipped(const std::vector<std::string>& skipped, const char* why) {
    if (!skipped.empty()) {
        std::cerr << "warning: skipped " << skipped.size() << " utterance(s) (" << why << "):";
        for (const auto& id : skipped) {
            std::cerr << " " << id;
        }
        std::cerr << "\n";
    }
}

struct SynthArgs {
    std::string out;
    int64_t n = 20;
    uint64_t seed = 1;
};

int run_synth(const SynthArgs& a) {
    const hutk::Manifest m = hutk::synth_corpus(a.n, a.seed, a.out);
    std::cout << "wrote " << m.records.size() << " utterances under " << a.out << "\n";
    return 0;
}

struct MfccArgs {
    std::string manifest;
    std::string out;
};

int run_mfcc(const MfccArgs& a) {
    const hutk::Manifest m = hutk::parse_manifest(a.manifest);
    fs::create_directories(a.out);
    std::vector<std::string> skipped;
    int64_t written = 0;
    for (const auto& rec : m.records) {
        const hutk::Waveform w = hutk::read_wav(rec.resolved_path);
        try {
            const hutk::FeatureSequence f = hutk::mfcc(w, {});
            hutk::write_features((fs::path(a.out) / (rec.id + ".fea")).string(), f);
            ++written;
        } catch (const hutk::Error& e) {
            if (e.code() != hutk::ErrorCode::TooShort) {
                throw;
            }
            skipped.push_back(rec.id);
        }
    }
    report_skipped(skipped, "below one analysis frame");
    std::cout << "wrote " << written << " feature files under " << a.out << "\n";
    return 0;
}

struct KmeansArgs {
    std::string features;
    std::string out;
    int64_t k = 100;
    uint64_t seed = 1;
    int64_t max_iter = 100;
    double tol = 1e-6;
};

int run_kmeans(const KmeansArgs& a) {
    std::vector<std::string> files;
    if (fs::is_directory(a.features)) {
        for (const auto& entry : fs::directory_iterator(a.features)) {
            if (entry.is_regular_file() && entry.path().extension() == ".fea") {
                files.push_back(entry.path().string());
            }
        }
        std::sort(files.begin(), files.end());
    }
    require(!files.empty(), hutk::ErrorCode::NotFound,
            "no .fea files under " + a.features);

    std::vector<hutk::FeatureSequence> seqs;
    int64_t rows = 0;
    for (const auto& path : files) {
        seqs.push_back(hutk::read_features(path));
        require(seqs.back().frames.shape[1] == seqs.front().frames.shape[1],
                hutk::ErrorCode::ShapeMismatch, "feature width differs in " + path);
        rows += seqs.back().frames.shape[0];
    }
    hutk::Tensor<float> pooled = hutk::Tensor<float>::zeros({rows, seqs[0].frames.shape[1]});
    int64_t at = 0;
    for (const auto& s : seqs) {
        std::copy(s.frames.data.begin(), s.frames.data.end(),
                  pooled.data.begin() + at * pooled.shape[1]);
        at += s.frames.shape[0];
    }
    const hutk::Codebook cb =
        hutk::kmeans_fit(pooled, a.k, a.seed, static_cast<int>(a.max_iter), a.tol);
    hutk::write_codebook(a.out, cb);
    std::cout << "clustered " << rows << " frames into " << a.k << " units, inertia "
              << cb.inertia << ", wrote " << a.out << "\n";
    return 0;
}

struct LabelArgs {
    std::string manifest;
    std::string codebook;
    std::string out;
};

int run_label(const LabelArgs& a) {
    const hutk::Manifest m = hutk::parse_manifest(a.manifest);
    const hutk::Codebook cb = hutk::read_codebook(a.codebook);
    const hutk::ModelConfig cfg;  // only the fixed conv geometry matters here
    const hutk::LabelResult r = hutk::label_corpus(m, cb, cfg);
    fs::create_directories(a.out);
    for (const auto& l : r.labeled) {
        hutk::write_units((fs::path(a.out) / (l.id + ".unt")).string(), l.units);
    }
    report_skipped(r.skipped, "below one encoder frame");
    std::cout << "wrote " << r.labeled.size() << " unit files under " << a.out << "\n";
    return 0;
}

struct PretrainArgs {
    std::string manifest;
    std::string units;
    std::string out;
    std::string preset = "TOY";
    uint64_t seed = 1;
    hutk::PretrainOptions options;
};

int run_pretrain(const PretrainArgs& a) {
    const hutk::Manifest m = hutk::parse_manifest(a.manifest);
    std::vector<hutk::LabeledUtterance> labels;
    int64_t k = 0;
    for (const auto& rec : m.records) {
        const std::string path = (fs::path(a.units) / (rec.id + ".unt")).string();
        if (!fs::exists(path)) {
            continue;  // pretrain_loop reports the missing utterance by id
        }
        labels.push_back({rec.id, hutk::read_units(path)});
        if (k == 0) {
            k = labels.back().units.k;
        }
        require(labels.back().units.k == k, hutk::ErrorCode::ShapeMismatch,
                "codebook size differs between unit files: " + path);
    }
    require(k > 0, hutk::ErrorCode::NotFound, "no .unt files under " + a.units);

    const hutk::ModelConfig cfg =
        hutk::ModelConfig::preset_config(a.preset, static_cast<int>(k), hutk::charset_size());
    hutk::PretrainOptions options = a.options;
    options.checkpoint_dir = a.out;
    if (options.curve_path.empty()) {
        options.curve_path = (fs::path(a.out) / "curve.csv").string();
    }
    const hutk::PretrainResult r = hutk::pretrain_loop(m, labels, cfg, a.seed, options);
    if (!r.curve.empty()) {
        std::cout << "step " << r.curve.back().step << ": loss " << r.curve.back().loss
                  << ", masked accuracy " << r.curve.back().metric << "\n";
    }
    std::cout << "wrote " << (fs::path(a.out) / "ckpt_final.hutk").string() << "\n";
    return 0;
}

struct RefineArgs {
    std::string manifest;
    std::string checkpoint;
    std::string out_codebook;
    std::string out_units;
    int64_t layer = 1;
    int64_t k = 100;
    uint64_t seed = 1;
    int64_t max_iter = 100;
    double tol = 1e-6;
};

int run_refine(const RefineArgs& a) {
    const hutk::Manifest m = hutk::parse_manifest(a.manifest);
    const hutk::Checkpoint ck = hutk::read_checkpoint(a.checkpoint);
    const hutk::RefineResult r =
        hutk::refine_units(ck, m, a.layer, a.k, a.seed, a.max_iter, a.tol);
    hutk::write_codebook(a.out_codebook, r.codebook);
    fs::create_directories(a.out_units);
    for (const auto& l : r.labeled) {
        hutk::write_units((fs::path(a.out_units) / (l.id + ".unt")).string(), l.units);
    }
    report_skipped(r.skipped, "below one encoder frame");
    std::cout << "wrote " << a.out_codebook << " and " << r.labeled.size()
              << " unit files under " << a.out_units << "\n";
    return 0;
}

struct FinetuneArgs {
    std::string manifest;
    std::string checkpoint;
    std::string out;
    std::string eval_manifest;
    hutk::FinetuneOptions options;
};

int run_finetune(const FinetuneArgs& a) {
    const hutk::Manifest m = hutk::parse_manifest(a.manifest);
    const hutk::Checkpoint init = hutk::read_checkpoint(a.checkpoint);
    hutk::Manifest held;
    const hutk::Manifest* eval_ptr = nullptr;
    if (!a.eval_manifest.empty()) {
        held = hutk::parse_manifest(a.eval_manifest);
        eval_ptr = &held;
    }
    const hutk::FinetuneResult r = hutk::finetune_loop(m, init, a.options, eval_ptr);
    report_skipped(r.skipped, "not alignable");
    hutk::write_checkpoint(a.out, r.checkpoint.config, r.checkpoint.state);
    if (!r.curve.empty()) {
        std::cout << "step " << r.curve.back().step << ": loss " << r.curve.back().loss
                  << ", greedy WER " << r.curve.back().metric << "\n";
    }
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

struct DecodeArgs {
    std::string manifest;
    std::string checkpoint;
    std::string out;
};

int run_decode(const DecodeArgs& a) {
    const hutk::Manifest m = hutk::parse_manifest(a.manifest);
    const hutk::Checkpoint ck = hutk::read_checkpoint(a.checkpoint);
    const hutk::DecodeResult r = hutk::decode_corpus(ck, m);
    report_skipped(r.skipped, "below one encoder frame; empty hypothesis written");
    hutk::write_hypotheses(a.out, r);
    std::cout << "wrote " << r.hypotheses.size() << " hypotheses to " << a.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string refs;
    std::string refs_manifest;
    std::string hyps;
    std::string out;
    std::string text;
    int64_t threshold = 3;
    int64_t top_k = 10;
};

std::vector<hutk::EvalPair> load_eval_pairs(const EvalArgs& a) {
    require(a.refs.empty() != a.refs_manifest.empty(), hutk::ErrorCode::BadConfig,
            "provide exactly one of --refs and --refs-manifest");
    if (!a.refs.empty()) {
        return hutk::load_pairs(a.refs, a.hyps);
    }
    return hutk::pairs_from_manifest(hutk::parse_manifest(a.refs_manifest), a.hyps);
}

int run_eval(const EvalArgs& a) {
    const hutk::CorpusScore score = hutk::score_corpus(load_eval_pairs(a));
    char line[160];
    std::snprintf(line, sizeof(line), "WER %.4f (%lld/%lld)  CER %.4f (%lld/%lld)\n",
                  score.wer, static_cast<long long>(score.word_edits),
                  static_cast<long long>(score.ref_words), score.cer,
                  static_cast<long long>(score.char_edits),
                  static_cast<long long>(score.ref_chars));
    std::cout << line;
    if (!a.out.empty()) {
        nlohmann::ordered_json j;
        j["pairs"] = score.pairs;
        j["wer"] = score.wer;
        j["cer"] = score.cer;
        j["word_edits"] = score.word_edits;
        j["ref_words"] = score.ref_words;
        j["char_edits"] = score.char_edits;
        j["ref_chars"] = score.ref_chars;
        write_text_file(a.out, j.dump(2) + "\n");
        std::cout << "wrote " << a.out << "\n";
    }
    return 0;
}

int run_analyze(const EvalArgs& a) {
    const hutk::EvalReport report =
        hutk::evaluate_corpus(load_eval_pairs(a), a.threshold, a.top_k);
    if (!a.out.empty()) {
        write_text_file(a.out, hutk::report_json(report));
        std::cout << "wrote " << a.out << "\n";
    }
    if (!a.text.empty()) {
        write_text_file(a.text, hutk::report_text(report));
        std::cout << "wrote " << a.text << "\n";
    } else {
        std::cout << hutk::report_text(report);
    }
    return 0;
}

void add_opt_config(CLI::App* cmd, hutk::OptConfig& opt) {
    cmd->add_option("--lr", opt.lr, "Adam learning rate");
    cmd->add_option("--clip-norm", opt.clip_norm, "global gradient-norm clip (<=0 disables)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hidden-unit speech pipeline"};
    app.require_subcommand(1);

    SynthArgs synth;
    CLI::App* c_synth = app.add_subcommand("synth", "generate a deterministic test corpus");
    c_synth->add_option("--out", synth.out, "output directory")->required();
    c_synth->add_option("--n", synth.n, "number of utterances");
    c_synth->add_option("--seed", synth.seed, "corpus seed");

    MfccArgs mfcc;
    CLI::App* c_mfcc = app.add_subcommand("mfcc", "extract acoustic features");
    c_mfcc->add_option("--manifest", mfcc.manifest, "input manifest TSV")->required();
    c_mfcc->add_option("--out", mfcc.out, "output directory for .fea files")->required();

    KmeansArgs kmeans;
    CLI::App* c_kmeans = app.add_subcommand("kmeans", "fit a unit codebook on features");
    c_kmeans->add_option("--features", kmeans.features, "directory of .fea files")->required();
    c_kmeans->add_option("--out", kmeans.out, "output codebook path")->required();
    c_kmeans->add_option("--k", kmeans.k, "number of units");
    c_kmeans->add_option("--seed", kmeans.seed, "clustering seed");
    c_kmeans->add_option("--max-iter", kmeans.max_iter, "iteration cap");
    c_kmeans->add_option("--tol", kmeans.tol, "centroid-shift stopping threshold");

    LabelArgs label;
    CLI::App* c_label = app.add_subcommand("label", "assign unit labels at the encoder rate");
    c_label->add_option("--manifest", label.manifest, "input manifest TSV")->required();
    c_label->add_option("--codebook", label.codebook, "codebook path")->required();
    c_label->add_option("--out", label.out, "output directory for .unt files")->required();

    PretrainArgs pretrain;
    CLI::App* c_pretrain = app.add_subcommand("pretrain", "masked-unit self-supervised training");
    c_pretrain->add_option("--manifest", pretrain.manifest, "input manifest TSV")->required();
    c_pretrain->add_option("--units", pretrain.units, "directory of .unt files")->required();
    c_pretrain->add_option("--out", pretrain.out, "checkpoint output directory")->required();
    c_pretrain->add_option("--preset", pretrain.preset, "model preset (TOY/BASE/LARGE/XLARGE)");
    c_pretrain->add_option("--steps", pretrain.options.steps, "training steps");
    c_pretrain->add_option("--seed", pretrain.seed, "parameter initialization seed");
    c_pretrain->add_option("--mask-seed", pretrain.options.mask_seed, "mask sampling seed");
    c_pretrain->add_option("--mask-prob", pretrain.options.mask.mask_prob,
                           "per-frame span start probability");
    c_pretrain->add_option("--span", pretrain.options.mask.span_len, "masked span length");
    c_pretrain->add_option("--log-every", pretrain.options.log_every, "curve cadence");
    c_pretrain->add_option("--ckpt-every", pretrain.options.checkpoint_every,
                           "periodic checkpoint cadence (0 disables)");
    add_opt_config(c_pretrain, pretrain.options.opt);

    RefineArgs refine;
    CLI::App* c_refine = app.add_subcommand("refine", "re-cluster units on encoder states");
    c_refine->add_option("--manifest", refine.manifest, "input manifest TSV")->required();
    c_refine->add_option("--checkpoint", refine.checkpoint, "model checkpoint")->required();
    c_refine->add_option("--out-codebook", refine.out_codebook, "output codebook path")->required();
    c_refine->add_option("--out-units", refine.out_units, "output directory for .unt files")
        ->required();
    c_refine->add_option("--layer", refine.layer, "transformer layer to pool");
    c_refine->add_option("--k", refine.k, "number of units");
    c_refine->add_option("--seed", refine.seed, "clustering seed");
    c_refine->add_option("--max-iter", refine.max_iter, "iteration cap");
    c_refine->add_option("--tol", refine.tol, "centroid-shift stopping threshold");

    FinetuneArgs finetune;
    CLI::App* c_finetune = app.add_subcommand("finetune", "character-level CTC training");
    c_finetune->add_option("--manifest", finetune.manifest, "input manifest TSV")->required();
    c_finetune->add_option("--checkpoint", finetune.checkpoint, "initial checkpoint")->required();
    c_finetune->add_option("--out", finetune.out, "output checkpoint path")->required();
    c_finetune->add_option("--steps", finetune.options.steps, "training steps");
    c_finetune->add_option("--head-seed", finetune.options.head_seed,
                           "character head initialization seed");
    c_finetune->add_option("--log-every", finetune.options.log_every, "WER evaluation cadence");
    c_finetune->add_option("--curve", finetune.options.curve_path, "loss curve CSV path");
    c_finetune->add_option("--eval-manifest", finetune.eval_manifest,
                           "separate corpus for WER tracking");
    c_finetune->add_flag("--no-freeze", [&finetune](int64_t) {
        finetune.options.freeze_extractor = false;
    }, "also train the conv front end");
    add_opt_config(c_finetune, finetune.options.opt);

    DecodeArgs decode;
    CLI::App* c_decode = app.add_subcommand("decode", "greedy best-path transcription");
    c_decode->add_option("--manifest", decode.manifest, "input manifest TSV")->required();
    c_decode->add_option("--checkpoint", decode.checkpoint, "model checkpoint")->required();
    c_decode->add_option("--out", decode.out, "output hypotheses TSV")->required();

    EvalArgs eval;
    CLI::App* c_eval = app.add_subcommand("eval", "corpus WER/CER scoring");
    c_eval->add_option("--refs", eval.refs, "reference TSV (id<TAB>text)");
    c_eval->add_option("--refs-manifest", eval.refs_manifest,
                       "manifest whose transcripts serve as references");
    c_eval->add_option("--hyps", eval.hyps, "hypothesis TSV")->required();
    c_eval->add_option("--out", eval.out, "score JSON output path");

    EvalArgs analyze;
    CLI::App* c_analyze = app.add_subcommand("analyze", "bucket, bias, and diff report");
    c_analyze->add_option("--refs", analyze.refs, "reference TSV (id<TAB>text)");
    c_analyze->add_option("--refs-manifest", analyze.refs_manifest,
                          "manifest whose transcripts serve as references");
    c_analyze->add_option("--hyps", analyze.hyps, "hypothesis TSV")->required();
    c_analyze->add_option("--out", analyze.out, "report JSON output path");
    c_analyze->add_option("--text", analyze.text, "report text output path");
    c_analyze->add_option("--threshold", analyze.threshold, "short-bucket word threshold");
    c_analyze->add_option("--top-k", analyze.top_k, "bias table size");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_synth->parsed()) return run_synth(synth);
        if (c_mfcc->parsed()) return run_mfcc(mfcc);
        if (c_kmeans->parsed()) return run_kmeans(kmeans);
        if (c_label->parsed()) return run_label(label);
        if (c_pretrain->parsed()) return run_pretrain(pretrain);
        if (c_refine->parsed()) return run_refine(refine);
        if (c_finetune->parsed()) return run_finetune(finetune);
        if (c_decode->parsed()) return run_decode(decode);
        if (c_eval->parsed()) return run_eval(eval);
        if (c_analyze->parsed()) return run_analyze(analyze);
    } catch (const hutk::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
