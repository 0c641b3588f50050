// Release gate for the pipeline: ten independent checks covering the
// numerical core (loss oracles, gradients, geometry, scoring), the training
// loops, and end-to-end reproducibility. Each check prints one [PASS]/[FAIL]
// line with a short metric summary and its wall time; the process exits 0
// only when every check passes. `--only N` runs a single check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hutk/charset.hpp"
#include "hutk/checkpoint.hpp"
#include "hutk/common.hpp"
#include "hutk/ctc.hpp"
#include "hutk/dsp.hpp"
#include "hutk/eval.hpp"
#include "hutk/kmeans.hpp"
#include "hutk/manifest.hpp"
#include "hutk/model.hpp"
#include "hutk/rng.hpp"
#include "hutk/synth.hpp"
#include "hutk/tensor.hpp"
#include "hutk/train.hpp"
#include "hutk/units.hpp"
#include "hutk/wav.hpp"

namespace fs = std::filesystem;
using namespace hutk;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return std::string(buf);
}

fs::path work_root() {
    const fs::path root = fs::temp_directory_path() / "hutk_gate";
    fs::create_directories(root);
    return root;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = work_root() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::NotFound, "cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void put_bytes(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename Fn>
bool raises(Fn&& fn, ErrorCode expected) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == expected;
    }
    return false;
}

// ---------------------------------------------------------------------------
// 1. CTC loss against exhaustive path enumeration.

Outcome check_ctc_oracle() {
    Rng rng(17);
    int instances = 0;
    double max_err = 0.0;
    while (instances < 150) {
        const int64_t t = 1 + static_cast<int64_t>(rng.uniform_int(6));
        const int64_t v = 1 + static_cast<int64_t>(rng.uniform_int(3));
        const int len = static_cast<int>(rng.uniform_int(4));
        std::vector<uint16_t> target;
        for (int i = 0; i < len; ++i) {
            target.push_back(static_cast<uint16_t>(1 + rng.uniform_int(static_cast<uint64_t>(v))));
        }
        if (ctc_detail::min_alignable_frames(target) > t) {
            continue;
        }
        const Tensor<double> lp = Tensor<double>::gaussian({t, v + 1}, rng, 1.0);
        const double fast = ctc_loss(lp, target);
        const double slow = ctc_brute_force(lp, target);
        max_err = std::max(max_err, std::abs(fast - slow));
        ++instances;
    }
    Outcome o;
    o.ok = instances >= 100 && max_err < 1e-10;
    o.detail = fmt("%d instances, max |diff| %.2e", instances, max_err);
    return o;
}

// ---------------------------------------------------------------------------
// 2. Central finite differences against every tape primitive and both
//    composed losses on the small preset.

using Id = Tape<double>::Id;
using BuildFn = std::function<Id(Tape<double>&, const std::vector<Id>&)>;

Id project_to_scalar(Tape<double>& tape, Id x, uint64_t seed) {
    if (tape.numel(x) == 1) {
        return x;
    }
    Rng rng(seed);
    const Tensor<double> w = Tensor<double>::gaussian(tape.shape(x), rng, 1.0);
    return tape.sum(tape.mul(x, tape.leaf(w)));
}

double fd_max_rel(const std::vector<Tensor<double>>& inputs, const BuildFn& build) {
    Tape<double> tape;
    std::vector<Id> ids;
    for (const auto& t : inputs) {
        ids.push_back(tape.leaf(t, true));
    }
    const Id root = build(tape, ids);
    tape.backward(root);
    double worst = 0.0;
    for (size_t i = 0; i < ids.size(); ++i) {
        const Tensor<double> g = tape.grad_tensor(ids[i]);
        auto f = [&](const Tensor<double>& probe) {
            Tape<double> t2(false);
            std::vector<Id> pid;
            for (size_t j = 0; j < inputs.size(); ++j) {
                pid.push_back(t2.leaf(j == i ? probe : inputs[j]));
            }
            return t2.scalar_value(build(t2, pid));
        };
        worst = std::max(worst, finite_diff_check(f, inputs[i], g.data));
    }
    return worst;
}

Tensor<double> randn(std::vector<int64_t> shape, uint64_t seed, double std_dev = 1.0) {
    Rng rng(seed);
    return Tensor<double>::gaussian(std::move(shape), rng, std_dev);
}

double primitive_sweep(std::string* worst_name) {
    std::vector<std::pair<std::string, double>> errs;
    errs.emplace_back("add", fd_max_rel({randn({2, 5}, 21), randn({2, 5}, 22)},
                                        [](Tape<double>& t, const std::vector<Id>& in) {
                                            return project_to_scalar(t, t.add(in[0], in[1]), 90);
                                        }));
    errs.emplace_back("sub", fd_max_rel({randn({2, 5}, 23), randn({2, 5}, 24)},
                                        [](Tape<double>& t, const std::vector<Id>& in) {
                                            return project_to_scalar(t, t.sub(in[0], in[1]), 91);
                                        }));
    errs.emplace_back("mul", fd_max_rel({randn({2, 5}, 25), randn({2, 5}, 26)},
                                        [](Tape<double>& t, const std::vector<Id>& in) {
                                            return project_to_scalar(t, t.mul(in[0], in[1]), 92);
                                        }));
    errs.emplace_back("scale", fd_max_rel({randn({7}, 27)},
                                          [](Tape<double>& t, const std::vector<Id>& in) {
                                              return project_to_scalar(t, t.scale(in[0], -1.7), 93);
                                          }));
    errs.emplace_back("add_row", fd_max_rel({randn({4, 3}, 28), randn({3}, 29)},
                                            [](Tape<double>& t, const std::vector<Id>& in) {
                                                return project_to_scalar(t, t.add_row(in[0], in[1]), 94);
                                            }));
    errs.emplace_back("sum", fd_max_rel({randn({3, 4}, 30)},
                                        [](Tape<double>& t, const std::vector<Id>& in) {
                                            return t.sum(in[0]);
                                        }));
    errs.emplace_back("matmul", fd_max_rel({randn({3, 4}, 31), randn({4, 2}, 32)},
                                           [](Tape<double>& t, const std::vector<Id>& in) {
                                               return project_to_scalar(t, t.matmul(in[0], in[1]), 95);
                                           }));
    errs.emplace_back("transpose", fd_max_rel({randn({3, 4}, 33)},
                                              [](Tape<double>& t, const std::vector<Id>& in) {
                                                  return project_to_scalar(t, t.transpose(in[0]), 96);
                                              }));
    errs.emplace_back("layer_norm",
                      fd_max_rel({randn({3, 5}, 34), randn({5}, 35), randn({5}, 36)},
                                 [](Tape<double>& t, const std::vector<Id>& in) {
                                     return project_to_scalar(
                                         t, t.layer_norm(in[0], in[1], in[2], 1e-5), 97);
                                 }));
    errs.emplace_back("gelu", fd_max_rel({randn({9}, 37)},
                                         [](Tape<double>& t, const std::vector<Id>& in) {
                                             return project_to_scalar(t, t.gelu(in[0]), 98);
                                         }));
    errs.emplace_back("softmax_rows", fd_max_rel({randn({3, 4}, 38)},
                                                 [](Tape<double>& t, const std::vector<Id>& in) {
                                                     return project_to_scalar(t, t.softmax_rows(in[0]), 99);
                                                 }));
    errs.emplace_back("log_softmax_rows",
                      fd_max_rel({randn({3, 4}, 39)},
                                 [](Tape<double>& t, const std::vector<Id>& in) {
                                     return project_to_scalar(t, t.log_softmax_rows(in[0]), 100);
                                 }));
    errs.emplace_back("slice_rows", fd_max_rel({randn({5, 3}, 40)},
                                               [](Tape<double>& t, const std::vector<Id>& in) {
                                                   return project_to_scalar(t, t.slice_rows(in[0], 1, 4), 101);
                                               }));
    errs.emplace_back("slice_cols", fd_max_rel({randn({4, 6}, 41)},
                                               [](Tape<double>& t, const std::vector<Id>& in) {
                                                   return project_to_scalar(t, t.slice_cols(in[0], 2, 5), 102);
                                               }));
    errs.emplace_back("concat_cols",
                      fd_max_rel({randn({3, 2}, 42), randn({3, 4}, 43)},
                                 [](Tape<double>& t, const std::vector<Id>& in) {
                                     return project_to_scalar(t, t.concat_cols({in[0], in[1]}), 103);
                                 }));
    errs.emplace_back("replace_rows",
                      fd_max_rel({randn({4, 3}, 44), randn({3}, 45)},
                                 [](Tape<double>& t, const std::vector<Id>& in) {
                                     return project_to_scalar(t, t.replace_rows(in[0], in[1], {1, 3}), 104);
                                 }));
    errs.emplace_back("cross_entropy", fd_max_rel({randn({6}, 46)},
                                                  [](Tape<double>& t, const std::vector<Id>& in) {
                                                      return t.cross_entropy(in[0], 2);
                                                  }));
    errs.emplace_back("softmax_xent_rows",
                      fd_max_rel({randn({4, 5}, 47)},
                                 [](Tape<double>& t, const std::vector<Id>& in) {
                                     return t.softmax_xent_rows(in[0], {1, 0, 3, 2}, {0, 2, 3});
                                 }));
    errs.emplace_back("conv1d",
                      fd_max_rel({randn({12, 2}, 48), randn({6, 4}, 49), randn({4}, 50)},
                                 [](Tape<double>& t, const std::vector<Id>& in) {
                                     return project_to_scalar(t, t.conv1d(in[0], in[1], in[2], 3, 2), 105);
                                 }));
    double worst = 0.0;
    for (const auto& [name, err] : errs) {
        if (err > worst) {
            worst = err;
            *worst_name = name;
        }
    }
    return worst;
}

double composed_fd(const ModelConfig& cfg, const ModelState<double>& st,
                   const std::function<double(Tape<double>&, const BoundModel<double>&)>& run) {
    // Analytic pass: run() must leave the tape's reverse sweep completed.
    Tape<double> tape;
    const BoundModel<double> bm = bind_model(tape, st, cfg);
    run(tape, bm);

    double worst = 0.0;
    for (const std::string& name : st.names) {
        const Tensor<double> g = tape.grad_tensor(bm.p(name));
        ModelState<double> probe_state = st;
        auto f = [&](const Tensor<double>& probe) {
            probe_state.param(name) = probe;
            Tape<double> t2(false);
            const BoundModel<double> pbm = bind_model(t2, probe_state, cfg);
            return run(t2, pbm);
        };
        const int64_t max_coords = std::min<int64_t>(st.param(name).numel(), 5);
        worst = std::max(worst,
                         finite_diff_check(f, st.param(name), g.data, 1e-5, max_coords,
                                           1000 + std::hash<std::string>{}(name) % 1000));
    }
    return worst;
}

Outcome check_gradients() {
    std::string worst_prim;
    const double prim_err = primitive_sweep(&worst_prim);

    const ModelConfig cfg = ModelConfig::preset_config("TOY", 8, charset_size());
    const ModelState<double> st = init_model_state<double>(cfg, 101);
    Rng wav_rng(55);
    std::vector<float> samples(1040);
    for (auto& s : samples) {
        s = static_cast<float>(wav_rng.gaussian(0.0, 0.3));
    }
    // 1040 samples give three encoder frames.
    const std::vector<int> unit_labels = {1, 5, 2};
    const std::vector<int64_t> mask_rows = {0, 2};
    const std::vector<uint16_t> ctc_target = encode_transcript("ab");

    const double masked_err = composed_fd(
        cfg, st, [&](Tape<double>& tape, const BoundModel<double>& bm) {
            const Id h = extract_features(bm, tape.leaf(waveform_tensor<double>(samples)));
            const auto res = encode(bm, h, mask_rows);
            const Id logits = unit_logits(bm, res.layer_outputs.back());
            const Id loss = tape.softmax_xent_rows(logits, unit_labels, mask_rows);
            const double value = tape.scalar_value(loss);
            if (tape.grad_enabled()) {
                tape.backward(loss);
            }
            return value;
        });

    const double ctc_err = composed_fd(
        cfg, st, [&](Tape<double>& tape, const BoundModel<double>& bm) {
            const Id h = extract_features(bm, tape.leaf(waveform_tensor<double>(samples)));
            const auto res = encode(bm, h, {});
            const Id logits = char_logits(bm, res.layer_outputs.back());
            const Id logp = tape.log_softmax_rows(logits);
            if (tape.grad_enabled()) {
                return ctc_backward(tape, logp, ctc_target);
            }
            return ctc_loss(tape.value_tensor(logp), ctc_target);
        });

    const double worst = std::max({prim_err, masked_err, ctc_err});
    Outcome o;
    o.ok = worst < 1e-4;
    o.detail = fmt("primitives %.1e (worst %s), masked loss %.1e, ctc loss %.1e", prim_err,
                   worst_prim.c_str(), masked_err, ctc_err);
    return o;
}

// ---------------------------------------------------------------------------
// 3. Conv front-end geometry against direct window counting.

int64_t simulate_frames(const ModelConfig& cfg, int64_t n) {
    int64_t len = n;
    for (size_t i = 0; i < cfg.conv_kernels.size(); ++i) {
        const int64_t k = cfg.conv_kernels[i];
        const int64_t s = cfg.conv_strides[i];
        if (len < k) {
            return 0;
        }
        int64_t count = 0;
        for (int64_t start = 0; start + k <= len; start += s) {
            ++count;
        }
        len = count;
    }
    return len;
}

Outcome check_geometry() {
    const ModelConfig cfg = ModelConfig::preset_config("TOY", 8, charset_size());
    bool ok = true;
    std::string why;

    ok &= cfg.stride_product() == 320;
    ok &= cfg.receptive_field() == 400;
    ok &= output_length(cfg, 16000) == 49;
    ok &= output_length(cfg, 400) == 1;
    ok &= output_length(cfg, 719) == 1;
    ok &= output_length(cfg, 720) == 2;
    ok &= raises([&] { output_length(cfg, 399); }, ErrorCode::TooShort);
    if (!ok) {
        why = "fixed-point checks failed";
    }

    Rng rng(7);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        const int64_t n = 400 + static_cast<int64_t>(rng.uniform_int(120000));
        if (output_length(cfg, n) != simulate_frames(cfg, n)) {
            ++mismatches;
        }
    }
    ok &= mismatches == 0;

    Outcome o;
    o.ok = ok;
    o.detail = fmt("stride product 320, 16000->49, 1000 random lengths, %d mismatches%s%s",
                   mismatches, why.empty() ? "" : "; ", why.c_str());
    return o;
}

// ---------------------------------------------------------------------------
// 4. Pooled WER on hand-scored fixture pairs, against a recursive oracle.

int64_t recursive_distance(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           size_t i, size_t j, std::map<std::pair<size_t, size_t>, int64_t>& memo) {
    if (i == a.size()) {
        return static_cast<int64_t>(b.size() - j);
    }
    if (j == b.size()) {
        return static_cast<int64_t>(a.size() - i);
    }
    const auto key = std::make_pair(i, j);
    const auto it = memo.find(key);
    if (it != memo.end()) {
        return it->second;
    }
    const int64_t sub = recursive_distance(a, b, i + 1, j + 1, memo) + (a[i] == b[j] ? 0 : 1);
    const int64_t del = recursive_distance(a, b, i + 1, j, memo) + 1;
    const int64_t ins = recursive_distance(a, b, i, j + 1, memo) + 1;
    memo[key] = std::min({sub, del, ins});
    return memo[key];
}

int64_t oracle_distance(const std::string& ref, const std::string& hyp) {
    std::map<std::pair<size_t, size_t>, int64_t> memo;
    return recursive_distance(word_tokens(ref), word_tokens(hyp), 0, 0, memo);
}

Outcome check_fixed_scoring() {
    const std::string ref1 = "muhalefet bu sava inanmıyor";
    const std::string hyp1 = "mahale fet usava inanmi or";
    const std::string ref2 = "damarlarında dolaşan kan değil yanardağ lavlarıydı sanki";
    const std::string hyp2 = "damarunında oluaşam kan değil yanar dağılan larıydı";

    const CorpusScore s1 = score_corpus({{"p1", ref1, hyp1}});
    const CorpusScore s2 = score_corpus({{"p2", ref2, hyp2}});
    const int64_t o1 = oracle_distance(ref1, hyp1);
    const int64_t o2 = oracle_distance(ref2, hyp2);

    bool ok = true;
    ok &= s1.word_edits == o1 && o1 == 5 && s1.ref_words == 4;
    ok &= s1.wer == 1.25;
    ok &= s2.word_edits == o2 && o2 == 5 && s2.ref_words == 7;
    ok &= s2.wer == 5.0 / 7.0;

    Outcome o;
    o.ok = ok;
    o.detail = fmt("pair one WER %.4f (oracle %lld/4), pair two WER %.4f (oracle %lld/7)", s1.wer,
                   static_cast<long long>(o1), s2.wer, static_cast<long long>(o2));
    return o;
}

// ---------------------------------------------------------------------------
// 5. Masked-unit pretraining beats chance on synthetic audio.

Tensor<float> pooled_features(const Manifest& m, std::vector<FeatureSequence>* per_utt) {
    const DspConfig dcfg;
    int64_t rows = 0;
    for (const auto& rec : m.records) {
        per_utt->push_back(mfcc(read_wav(rec.resolved_path), dcfg));
        rows += per_utt->back().frames.shape[0];
    }
    require(rows > 0, ErrorCode::EmptyOutput, "no feature frames");
    const int64_t dim = per_utt->front().frames.shape[1];
    Tensor<float> pooled = Tensor<float>::zeros({rows, dim});
    int64_t at = 0;
    for (const auto& f : *per_utt) {
        std::copy(f.frames.data.begin(), f.frames.data.end(), pooled.data.begin() + at * dim);
        at += f.frames.shape[0];
    }
    return pooled;
}

Outcome check_pretrain() {
    const fs::path dir = fresh_dir("pretrain_sanity");
    const Manifest m = synth_corpus(12, 2024, dir.string());
    const ModelConfig cfg = ModelConfig::preset_config("TOY", 16, charset_size());

    std::vector<FeatureSequence> feats;
    const Tensor<float> pooled = pooled_features(m, &feats);
    const Codebook cb = kmeans_fit(pooled, 16, 7);
    const LabelResult labels = label_corpus(m, cb, cfg);

    PretrainOptions po;
    po.steps = 1000;
    po.log_every = 25;
    po.opt.lr = 2e-3;
    const PretrainResult r = pretrain_loop(m, labels.labeled, cfg, 3, po);

    const double ln_k = std::log(16.0);
    const double first_loss = r.curve.front().loss;
    double best_acc = 0.0;
    for (const auto& p : r.curve) {
        best_acc = std::max(best_acc, p.metric);
    }
    const bool init_ok = std::abs(first_loss - ln_k) <= 0.2 * ln_k;
    const bool acc_ok = best_acc > 0.3125;

    Outcome o;
    o.ok = init_ok && acc_ok && labels.skipped.empty();
    o.detail = fmt("initial loss %.3f (target %.3f +-20%%), best masked acc %.3f (chance 0.0625), "
                   "final %.3f",
                   first_loss, ln_k, best_acc, r.curve.back().metric);
    return o;
}

// ---------------------------------------------------------------------------
// 6. CTC fine-tuning memorizes a five-utterance corpus to zero greedy WER.

Outcome check_finetune() {
    const fs::path dir = fresh_dir("finetune_memorize");
    const Manifest m = synth_corpus(5, 77, dir.string());
    const ModelConfig cfg = ModelConfig::preset_config("TOY", 16, charset_size());

    Checkpoint init;
    init.config = cfg;
    init.state = init_model_state<float>(cfg, 9);

    FinetuneOptions fo;
    fo.steps = 2000;
    fo.log_every = 100;
    fo.opt.lr = 2e-3;
    const FinetuneResult r = finetune_loop(m, init, fo);

    double min_wer = std::numeric_limits<double>::infinity();
    int64_t zero_step = -1;
    for (const auto& p : r.curve) {
        if (p.metric < min_wer) {
            min_wer = p.metric;
        }
        if (p.metric == 0.0 && zero_step < 0) {
            zero_step = p.step;
        }
    }

    const DecodeResult decoded = decode_corpus(r.checkpoint, m);
    std::vector<EvalPair> pairs;
    for (size_t i = 0; i < m.records.size(); ++i) {
        pairs.push_back({m.records[i].id, normalize_transcript(m.records[i].transcript),
                         decoded.hypotheses[i].second});
    }
    const double decode_wer = score_corpus(pairs).wer;

    Outcome o;
    o.ok = min_wer == 0.0 && r.skipped.empty();
    o.detail = fmt("WER reached 0 at step %lld, final decode WER %.3f",
                   static_cast<long long>(zero_step), decode_wer);
    return o;
}

// ---------------------------------------------------------------------------
// 7. k-means against brute-force oracles; inertia never increases.

double best_two_partition_inertia(const std::vector<float>& xs) {
    double best = std::numeric_limits<double>::infinity();
    const size_t n = xs.size();
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        double sum[2] = {0, 0};
        int count[2] = {0, 0};
        for (size_t i = 0; i < n; ++i) {
            const int c = (mask >> i) & 1u;
            sum[c] += xs[i];
            ++count[c];
        }
        if (count[0] == 0 || count[1] == 0) {
            continue;
        }
        const double c0 = sum[0] / count[0];
        const double c1 = sum[1] / count[1];
        double inertia = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double d = xs[i] - (((mask >> i) & 1u) ? c1 : c0);
            inertia += d * d;
        }
        best = std::min(best, inertia);
    }
    return best;
}

Outcome check_kmeans() {
    bool ok = true;
    std::string why;

    // Four points on a line: the optimal 2-partition is {0,1} | {9,10}.
    const std::vector<float> xs = {0.0f, 1.0f, 9.0f, 10.0f};
    const Codebook pair_cb = kmeans_fit(Tensor<float>({4, 1}, {0, 1, 9, 10}), 2, 1);
    std::vector<float> centroids = {pair_cb.centroids.at(0, 0), pair_cb.centroids.at(1, 0)};
    std::sort(centroids.begin(), centroids.end());
    const double brute = best_two_partition_inertia(xs);
    ok &= std::abs(centroids[0] - 0.5f) < 1e-6 && std::abs(centroids[1] - 9.5f) < 1e-6;
    ok &= std::abs(pair_cb.inertia - 1.0) < 1e-9 && std::abs(brute - 1.0) < 1e-12;
    if (!ok) {
        why = "pair-partition oracle failed";
    }

    // Well-separated blobs must be recovered exactly (up to relabeling).
    Rng blob_rng(5);
    const int per_blob = 25;
    const double centers[3][2] = {{0, 0}, {8, 0}, {0, 8}};
    Tensor<float> pts = Tensor<float>::zeros({3 * per_blob, 2});
    for (int b = 0; b < 3; ++b) {
        for (int i = 0; i < per_blob; ++i) {
            pts.at(b * per_blob + i, 0) =
                static_cast<float>(centers[b][0] + blob_rng.gaussian(0.0, 0.25));
            pts.at(b * per_blob + i, 1) =
                static_cast<float>(centers[b][1] + blob_rng.gaussian(0.0, 0.25));
        }
    }
    const Codebook blob_cb = kmeans_fit(pts, 3, 11);
    const std::vector<int64_t> assign = kmeans_assign_frames(blob_cb, pts);
    std::map<int, int64_t> blob_to_cluster;
    bool pure = true;
    for (int b = 0; b < 3; ++b) {
        const int64_t c = assign[static_cast<size_t>(b * per_blob)];
        blob_to_cluster[b] = c;
        for (int i = 0; i < per_blob; ++i) {
            pure &= assign[static_cast<size_t>(b * per_blob + i)] == c;
        }
    }
    pure &= blob_to_cluster[0] != blob_to_cluster[1] && blob_to_cluster[1] != blob_to_cluster[2] &&
            blob_to_cluster[0] != blob_to_cluster[2];
    ok &= pure;
    if (!pure) {
        why = "blob recovery failed";
    }

    // Lloyd iterations can only lower the objective: for a fixed seed the
    // inertia after m iterations must be non-increasing in m.
    Rng data_rng(33);
    int violations = 0;
    for (int ds = 0; ds < 1000; ++ds) {
        const int64_t n = 4 + static_cast<int64_t>(data_rng.uniform_int(21));
        const int64_t d = 1 + static_cast<int64_t>(data_rng.uniform_int(3));
        int64_t k = 1 + static_cast<int64_t>(data_rng.uniform_int(4));
        k = std::min<int64_t>(k, n);
        const Tensor<float> data = Tensor<float>::gaussian({n, d}, data_rng, 1.0);
        double prev = std::numeric_limits<double>::infinity();
        for (int m = 1; m <= 6; ++m) {
            const Codebook cb = kmeans_fit(data, k, 1000 + static_cast<uint64_t>(ds), m, 0.0);
            if (cb.inertia > prev + 1e-9) {
                ++violations;
            }
            prev = cb.inertia;
        }
    }
    ok &= violations == 0;

    Outcome o;
    o.ok = ok;
    o.detail = fmt("pair inertia %.6f (oracle %.6f), blobs recovered, %d staircase violations%s%s",
                   pair_cb.inertia, brute, violations, why.empty() ? "" : "; ", why.c_str());
    return o;
}

// ---------------------------------------------------------------------------
// 8. Length-bucket scoring matches independent per-bucket rescoring.

Outcome check_buckets() {
    std::vector<EvalPair> pairs;
    // Short bucket (refs of <= 3 words): 50 reference words, 11 word errors.
    for (int i = 0; i < 25; ++i) {
        const std::string id = fmt("s%02d", i);
        if (i < 11) {
            pairs.push_back({id, "kedi evde", "kedi evda"});
        } else {
            pairs.push_back({id, "kedi evde", "kedi evde"});
        }
        // Interleave a long pair after every few short ones so bucketing
        // cannot rely on input order.
        if (i < 10) {
            const std::string lid = fmt("l%02d", i);
            pairs.push_back({lid, "bu ev çok eski sayılır", "bu ev çok eski sanılır"});
        }
    }

    const BucketReport br = bucket_report(pairs, 3);
    bool ok = true;
    ok &= br.short_bucket.wer == 11.0 / 50.0;
    ok &= br.long_bucket.wer == 10.0 / 50.0;
    ok &= br.increase_defined;
    ok &= std::abs(br.relative_increase - 0.1) < 1e-12;

    // Independent rescoring: split by reference length and score each side.
    std::vector<EvalPair> short_side, long_side;
    for (const auto& p : pairs) {
        if (static_cast<int64_t>(word_tokens(p.reference).size()) <= 3) {
            short_side.push_back(p);
        } else {
            long_side.push_back(p);
        }
    }
    const CorpusScore ss = score_corpus(short_side);
    const CorpusScore ls = score_corpus(long_side);
    ok &= ss.wer == br.short_bucket.wer && ss.word_edits == br.short_bucket.word_edits &&
          ss.ref_words == br.short_bucket.ref_words;
    ok &= ls.wer == br.long_bucket.wer && ls.word_edits == br.long_bucket.word_edits &&
          ls.ref_words == br.long_bucket.ref_words;

    Outcome o;
    o.ok = ok;
    o.detail = fmt("short %.4f vs long %.4f -> +%.1f%% relative", br.short_bucket.wer,
                   br.long_bucket.wer, br.relative_increase * 100.0);
    return o;
}

// ---------------------------------------------------------------------------
// 9. Binary artifacts round-trip bitwise and reject corruption.

Outcome check_persistence() {
    const fs::path dir = fresh_dir("persistence");
    int checks = 0;
    bool ok = true;
    const auto expect = [&](bool cond) {
        ++checks;
        ok &= cond;
    };

    // Checkpoint.
    ModelConfig cfg;
    cfg.preset = "GATE-TEST";
    cfg.conv_channels = 3;
    cfg.d_model = 4;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ffn = 8;
    cfg.max_positions = 16;
    cfg.num_units = 5;
    cfg.charset_size = charset_size();
    cfg.validate();
    const ModelState<float> state = init_model_state<float>(cfg, 42);
    const fs::path ck = dir / "model.hutk";
    write_checkpoint(ck.string(), cfg, state);
    const Checkpoint back = read_checkpoint(ck.string());
    write_checkpoint((dir / "model2.hutk").string(), back.config, back.state);
    expect(file_bytes(ck) == file_bytes(dir / "model2.hutk"));

    std::string bytes = file_bytes(ck);
    bytes[0] = 'X';
    put_bytes(dir / "bad_magic.hutk", bytes);
    expect(raises([&] { read_checkpoint((dir / "bad_magic.hutk").string()); },
                  ErrorCode::VersionMismatch));
    bytes = file_bytes(ck);
    bytes[4] = 9;
    put_bytes(dir / "bad_version.hutk", bytes);
    expect(raises([&] { read_checkpoint((dir / "bad_version.hutk").string()); },
                  ErrorCode::VersionMismatch));
    put_bytes(dir / "short.hutk", file_bytes(ck).substr(0, file_bytes(ck).size() / 2));
    expect(raises([&] { read_checkpoint((dir / "short.hutk").string()); }, ErrorCode::Malformed));

    // Codebook.
    Codebook cb;
    Rng rng(5);
    cb.centroids = Tensor<float>::gaussian({4, 3}, rng, 1.0);
    const fs::path cbp = dir / "units.kmc";
    write_codebook(cbp.string(), cb);
    const Codebook cb2 = read_codebook(cbp.string());
    write_codebook((dir / "units2.kmc").string(), cb2);
    expect(file_bytes(cbp) == file_bytes(dir / "units2.kmc"));
    bytes = file_bytes(cbp);
    bytes[0] = 'Z';
    put_bytes(dir / "bad.kmc", bytes);
    expect(raises([&] { read_codebook((dir / "bad.kmc").string()); }, ErrorCode::VersionMismatch));
    put_bytes(dir / "short.kmc", file_bytes(cbp).substr(0, 10));
    expect(raises([&] { read_codebook((dir / "short.kmc").string()); }, ErrorCode::Malformed));

    // Unit labels.
    UnitSequence us;
    us.k = 6;
    us.frame_rate_hz = 50.0;
    us.units = {0, 5, 3, 1};
    const fs::path usp = dir / "a.unt";
    write_units(usp.string(), us);
    const UnitSequence us2 = read_units(usp.string());
    write_units((dir / "a2.unt").string(), us2);
    expect(file_bytes(usp) == file_bytes(dir / "a2.unt"));
    bytes = file_bytes(usp);
    bytes[0] = 'Q';
    put_bytes(dir / "bad.unt", bytes);
    expect(raises([&] { read_units((dir / "bad.unt").string()); }, ErrorCode::VersionMismatch));
    bytes = file_bytes(usp);
    bytes[4] = 2;  // shrink the stored codebook size below the largest id
    put_bytes(dir / "rogue.unt", bytes);
    expect(raises([&] { read_units((dir / "rogue.unt").string()); }, ErrorCode::Malformed));
    put_bytes(dir / "short.unt", file_bytes(usp).substr(0, file_bytes(usp).size() - 1));
    expect(raises([&] { read_units((dir / "short.unt").string()); }, ErrorCode::Malformed));

    // Features.
    FeatureSequence fseq;
    fseq.frames = Tensor<float>::gaussian({5, 4}, rng, 2.0);
    fseq.frame_rate_hz = 100.0;
    const fs::path fp = dir / "a.fea";
    write_features(fp.string(), fseq);
    const FeatureSequence f2 = read_features(fp.string());
    write_features((dir / "a2.fea").string(), f2);
    expect(file_bytes(fp) == file_bytes(dir / "a2.fea"));
    bytes = file_bytes(fp);
    bytes[0] = 'G';
    put_bytes(dir / "bad.fea", bytes);
    expect(raises([&] { read_features((dir / "bad.fea").string()); }, ErrorCode::VersionMismatch));
    put_bytes(dir / "short.fea", file_bytes(fp).substr(0, 16));
    expect(raises([&] { read_features((dir / "short.fea").string()); }, ErrorCode::Malformed));

    Outcome o;
    o.ok = ok;
    o.detail = fmt("%d persistence checks", checks);
    return o;
}

// ---------------------------------------------------------------------------
// 10. The full pipeline, run twice with the same seeds, is byte-identical.

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    require(out.good(), ErrorCode::IoError, "cannot write " + path.string());
}

void run_pipeline(const fs::path& root) {
    for (const char* sub : {"corpus", "features", "units", "pretrain", "finetune", "decode", "eval"}) {
        fs::create_directories(root / sub);
    }
    const Manifest m = synth_corpus(6, 11, (root / "corpus").string());
    const ModelConfig cfg = ModelConfig::preset_config("TOY", 12, charset_size());

    std::vector<FeatureSequence> feats;
    const Tensor<float> pooled = pooled_features(m, &feats);
    for (size_t i = 0; i < m.records.size(); ++i) {
        write_features((root / "features" / (m.records[i].id + ".fea")).string(), feats[i]);
    }
    const Codebook cb = kmeans_fit(pooled, 12, 5);
    write_codebook((root / "units" / "codebook.kmc").string(), cb);
    const LabelResult labels = label_corpus(m, cb, cfg);
    for (const auto& lu : labels.labeled) {
        write_units((root / "units" / (lu.id + ".unt")).string(), lu.units);
    }

    PretrainOptions po;
    po.steps = 40;
    po.log_every = 10;
    po.checkpoint_dir = (root / "pretrain").string();
    po.curve_path = (root / "pretrain" / "curve.csv").string();
    const PretrainResult pr = pretrain_loop(m, labels.labeled, cfg, 3, po);

    FinetuneOptions fo;
    fo.steps = 60;
    fo.log_every = 20;
    fo.curve_path = (root / "finetune" / "curve.csv").string();
    const FinetuneResult fr = finetune_loop(m, pr.checkpoint, fo);
    write_checkpoint((root / "finetune" / "model.hutk").string(), fr.checkpoint.config,
                     fr.checkpoint.state);

    const DecodeResult decoded = decode_corpus(fr.checkpoint, m);
    write_hypotheses((root / "decode" / "hyps.tsv").string(), decoded);

    const std::vector<EvalPair> pairs =
        pairs_from_manifest(m, (root / "decode" / "hyps.tsv").string());
    const EvalReport report = evaluate_corpus(pairs, 3, 10);
    write_text(root / "eval" / "report.json", report_json(report));
    write_text(root / "eval" / "report.txt", report_text(report));
}

Outcome check_determinism() {
    const fs::path run1 = fresh_dir("pipeline_run1");
    const fs::path run2 = fresh_dir("pipeline_run2");
    run_pipeline(run1);
    run_pipeline(run2);

    std::vector<std::string> rel1, rel2;
    for (const auto& e : fs::recursive_directory_iterator(run1)) {
        if (e.is_regular_file()) {
            rel1.push_back(fs::relative(e.path(), run1).string());
        }
    }
    for (const auto& e : fs::recursive_directory_iterator(run2)) {
        if (e.is_regular_file()) {
            rel2.push_back(fs::relative(e.path(), run2).string());
        }
    }
    std::sort(rel1.begin(), rel1.end());
    std::sort(rel2.begin(), rel2.end());

    bool ok = rel1 == rel2 && !rel1.empty();
    int mismatched = 0;
    if (ok) {
        for (const auto& rel : rel1) {
            if (file_bytes(run1 / rel) != file_bytes(run2 / rel)) {
                ++mismatched;
            }
        }
        ok = mismatched == 0;
    }

    Outcome o;
    o.ok = ok;
    o.detail = fmt("%zu artifacts compared, %d differ", rel1.size(), mismatched);
    return o;
}

// ---------------------------------------------------------------------------

struct GateCheck {
    int num;
    const char* what;
    double budget_sec;  // 0 = no wall-clock requirement
    std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0) {
            only = std::atoi(argv[i + 1]);
        }
    }

    const std::vector<GateCheck> checks = {
        {1, "alignment-free loss matches exhaustive path enumeration", 10, check_ctc_oracle},
        {2, "gradients match central finite differences end to end", 120, check_gradients},
        {3, "conv front-end geometry matches direct window counting", 0, check_geometry},
        {4, "pooled error rates reproduce hand-scored fixtures exactly", 0, check_fixed_scoring},
        {5, "masked-unit pretraining beats chance on synthetic audio", 600, check_pretrain},
        {6, "character-level training memorizes a tiny corpus to zero WER", 600, check_finetune},
        {7, "clustering matches brute-force oracles, inertia never rises", 0, check_kmeans},
        {8, "length-bucket scoring matches independent rescoring", 0, check_buckets},
        {9, "binary artifacts round-trip bitwise and reject corruption", 0, check_persistence},
        {10, "the full pipeline is byte-identical across reruns", 900, check_determinism},
    };

    int passed = 0;
    int ran = 0;
    for (const auto& c : checks) {
        if (only != 0 && c.num != only) {
            continue;
        }
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_sec > 0 && secs >= c.budget_sec) {
            o.ok = false;
            o.detail += fmt("; over the %.0fs budget", c.budget_sec);
        }
        std::printf("[%s] %2d. %s (%s; %.1fs)\n", o.ok ? "PASS" : "FAIL", c.num, c.what,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        if (o.ok) {
            ++passed;
        }
    }
    std::printf("%d/%d checks passed\n", passed, ran);
    return passed == ran ? 0 : 1;
}
