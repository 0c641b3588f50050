#include "hutk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "hutk/charset.hpp"
#include "hutk/common.hpp"

namespace hutk {

namespace {

int64_t token_cells(size_t rows, size_t cols) {
    return static_cast<int64_t>(rows) * static_cast<int64_t>(cols);
}

}  // namespace

EditOps edit_distance(const std::vector<std::string>& ref,
                      const std::vector<std::string>& hyp,
                      std::vector<AlignedOp>* alignment) {
    const size_t r = ref.size();
    const size_t h = hyp.size();
    std::vector<int64_t> dp((r + 1) * (h + 1));
    const auto cell = [&](size_t i, size_t j) -> int64_t& {
        return dp[token_cells(i, h + 1) + static_cast<int64_t>(j)];
    };
    for (size_t j = 0; j <= h; ++j) cell(0, j) = static_cast<int64_t>(j);
    for (size_t i = 1; i <= r; ++i) {
        cell(i, 0) = static_cast<int64_t>(i);
        for (size_t j = 1; j <= h; ++j) {
            const int64_t sub_cost = ref[i - 1] == hyp[j - 1] ? 0 : 1;
            cell(i, j) = std::min({cell(i - 1, j - 1) + sub_cost,
                                   cell(i - 1, j) + 1, cell(i, j - 1) + 1});
        }
    }

    EditOps ops;
    ops.distance = cell(r, h);
    std::vector<AlignedOp> aligned;
    size_t i = r;
    size_t j = h;
    while (i > 0 || j > 0) {
        const bool can_diag = i > 0 && j > 0;
        const int64_t sub_cost =
            can_diag ? (ref[i - 1] == hyp[j - 1] ? 0 : 1) : 0;
        if (can_diag && cell(i, j) == cell(i - 1, j - 1) + sub_cost) {
            aligned.push_back({sub_cost == 0 ? EditOp::Match : EditOp::Sub,
                               ref[i - 1], hyp[j - 1]});
            --i;
            --j;
        } else if (i > 0 && cell(i, j) == cell(i - 1, j) + 1) {
            aligned.push_back({EditOp::Del, ref[i - 1], ""});
            --i;
        } else {
            aligned.push_back({EditOp::Ins, "", hyp[j - 1]});
            --j;
        }
    }
    std::reverse(aligned.begin(), aligned.end());
    for (const AlignedOp& op : aligned) {
        if (op.op == EditOp::Sub) ++ops.subs;
        if (op.op == EditOp::Ins) ++ops.ins;
        if (op.op == EditOp::Del) ++ops.dels;
    }
    if (alignment != nullptr) *alignment = std::move(aligned);
    return ops;
}

std::vector<std::string> word_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<std::string> char_tokens(const std::string& text) {
    std::vector<std::string> out;
    for (char c : text) {
        if ((static_cast<uint8_t>(c) & 0xC0) == 0x80 && !out.empty()) {
            out.back().push_back(c);
        } else {
            out.emplace_back(1, c);
        }
    }
    return out;
}

CorpusScore score_corpus(const std::vector<EvalPair>& pairs) {
    require(!pairs.empty(), ErrorCode::EmptyReference, "no pairs to score");
    CorpusScore score;
    score.pairs = static_cast<int64_t>(pairs.size());
    for (const EvalPair& pair : pairs) {
        const auto ref_words = word_tokens(pair.reference);
        require(!ref_words.empty(), ErrorCode::EmptyReference,
                "empty reference for id " + pair.id);
        const auto hyp_words = word_tokens(pair.hypothesis);
        score.word_edits += edit_distance(ref_words, hyp_words).distance;
        score.ref_words += static_cast<int64_t>(ref_words.size());
        const auto ref_chars = char_tokens(pair.reference);
        const auto hyp_chars = char_tokens(pair.hypothesis);
        score.char_edits += edit_distance(ref_chars, hyp_chars).distance;
        score.ref_chars += static_cast<int64_t>(ref_chars.size());
    }
    score.wer = static_cast<double>(score.word_edits) /
                static_cast<double>(score.ref_words);
    score.cer = static_cast<double>(score.char_edits) /
                static_cast<double>(score.ref_chars);
    return score;
}

BucketReport bucket_report(const std::vector<EvalPair>& pairs,
                           int64_t threshold_words) {
    require(threshold_words >= 1, ErrorCode::BadConfig,
            "bucket threshold must be positive");
    BucketReport report;
    report.threshold_words = threshold_words;
    std::vector<EvalPair> shorts;
    std::vector<EvalPair> longs;
    for (const EvalPair& pair : pairs) {
        const auto n = static_cast<int64_t>(word_tokens(pair.reference).size());
        require(n > 0, ErrorCode::EmptyReference,
                "empty reference for id " + pair.id);
        (n <= threshold_words ? shorts : longs).push_back(pair);
    }
    if (!shorts.empty()) report.short_bucket = score_corpus(shorts);
    if (!longs.empty()) report.long_bucket = score_corpus(longs);
    report.increase_defined =
        !shorts.empty() && !longs.empty() && report.long_bucket.wer > 0.0;
    if (report.increase_defined) {
        report.relative_increase =
            (report.short_bucket.wer - report.long_bucket.wer) /
            report.long_bucket.wer;
    }
    return report;
}

std::vector<BiasEntry> bias_report(const std::vector<EvalPair>& pairs,
                                   int64_t top_k, int64_t min_count) {
    require(!pairs.empty(), ErrorCode::EmptyReference, "no pairs to score");
    std::map<std::string, BiasEntry> words;
    for (const EvalPair& pair : pairs) {
        for (const auto& w : word_tokens(pair.hypothesis)) {
            words[w].hyp_count += 1;
        }
        for (const auto& w : word_tokens(pair.reference)) {
            words[w].ref_count += 1;
        }
    }
    std::vector<BiasEntry> ranked;
    for (auto& [word, entry] : words) {
        if (entry.hyp_count < min_count) continue;
        entry.word = word;
        entry.score = static_cast<double>(entry.hyp_count + 1) /
                      static_cast<double>(entry.ref_count + 1);
        ranked.push_back(entry);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const BiasEntry& a, const BiasEntry& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.word < b.word;
                     });
    if (static_cast<int64_t>(ranked.size()) > top_k) {
        ranked.resize(static_cast<size_t>(top_k));
    }
    return ranked;
}

PairDiff diff_pair(const EvalPair& pair) {
    PairDiff diff;
    diff.id = pair.id;
    std::vector<AlignedOp> aligned;
    diff.ops = edit_distance(word_tokens(pair.reference),
                             word_tokens(pair.hypothesis), &aligned);

    const auto join = [](const std::vector<std::string>& parts) {
        std::string out;
        for (size_t i = 0; i < parts.size(); ++i) {
            if (i > 0) out.push_back(' ');
            out += parts[i];
        }
        return out;
    };
    const auto concat = [](const std::vector<std::string>& parts) {
        std::string out;
        for (const auto& p : parts) out += p;
        return out;
    };

    size_t i = 0;
    while (i < aligned.size()) {
        if (aligned[i].op == EditOp::Match) {
            ++i;
            continue;
        }
        size_t j = i;
        int subs = 0;
        int ins = 0;
        int dels = 0;
        while (j < aligned.size() && aligned[j].op != EditOp::Match) {
            if (aligned[j].op == EditOp::Sub) ++subs;
            if (aligned[j].op == EditOp::Ins) ++ins;
            if (aligned[j].op == EditOp::Del) ++dels;
            ++j;
        }
        std::vector<std::string> ref_run;
        std::vector<std::string> hyp_run;
        for (size_t k = i; k < j; ++k) {
            if (!aligned[k].ref_token.empty()) ref_run.push_back(aligned[k].ref_token);
            if (!aligned[k].hyp_token.empty()) hyp_run.push_back(aligned[k].hyp_token);
        }
        if (subs == 1 && ins >= 1 && dels == 0 && ref_run.size() == 1 &&
            concat(hyp_run) == ref_run[0]) {
            diff.entries.push_back({"split", ref_run[0], join(hyp_run)});
        } else if (subs == 1 && dels >= 1 && ins == 0 && hyp_run.size() == 1 &&
                   concat(ref_run) == hyp_run[0]) {
            diff.entries.push_back({"merge", join(ref_run), hyp_run[0]});
        } else {
            for (size_t k = i; k < j; ++k) {
                const char* label = aligned[k].op == EditOp::Sub   ? "sub"
                                    : aligned[k].op == EditOp::Ins ? "ins"
                                                                   : "del";
                diff.entries.push_back(
                    {label, aligned[k].ref_token, aligned[k].hyp_token});
            }
        }
        i = j;
    }
    return diff;
}

EvalReport evaluate_corpus(const std::vector<EvalPair>& pairs,
                           int64_t threshold_words, int64_t bias_top_k) {
    EvalReport report;
    report.corpus = score_corpus(pairs);
    report.buckets = bucket_report(pairs, threshold_words);
    report.bias = bias_report(pairs, bias_top_k);
    for (const EvalPair& pair : pairs) {
        PairDiff diff = diff_pair(pair);
        if (!diff.entries.empty()) report.diffs.push_back(std::move(diff));
    }
    return report;
}

namespace {

nlohmann::ordered_json score_json(const CorpusScore& score) {
    return {{"wer", score.wer},           {"cer", score.cer},
            {"pairs", score.pairs},       {"word_edits", score.word_edits},
            {"ref_words", score.ref_words}, {"char_edits", score.char_edits},
            {"ref_chars", score.ref_chars}};
}

}  // namespace

std::string report_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["corpus"] = score_json(report.corpus);
    j["buckets"]["threshold_words"] = report.buckets.threshold_words;
    j["buckets"]["short"] = report.buckets.short_bucket.pairs > 0
                                ? score_json(report.buckets.short_bucket)
                                : nlohmann::ordered_json();
    j["buckets"]["long"] = report.buckets.long_bucket.pairs > 0
                               ? score_json(report.buckets.long_bucket)
                               : nlohmann::ordered_json();
    if (report.buckets.increase_defined) {
        j["buckets"]["relative_increase"] = report.buckets.relative_increase;
    } else {
        j["buckets"]["relative_increase"] = nullptr;
    }
    j["bias"] = nlohmann::ordered_json::array();
    for (const BiasEntry& entry : report.bias) {
        j["bias"].push_back({{"word", entry.word},
                             {"hyp_count", entry.hyp_count},
                             {"ref_count", entry.ref_count},
                             {"score", entry.score}});
    }
    j["diffs"] = nlohmann::ordered_json::array();
    for (const PairDiff& diff : report.diffs) {
        nlohmann::ordered_json d;
        d["id"] = diff.id;
        d["entries"] = nlohmann::ordered_json::array();
        for (const DiffEntry& entry : diff.entries) {
            d["entries"].push_back({{"label", entry.label},
                                    {"ref", entry.ref_text},
                                    {"hyp", entry.hyp_text}});
        }
        j["diffs"].push_back(std::move(d));
    }
    return j.dump(2) + "\n";
}

std::string report_text(const EvalReport& report) {
    std::ostringstream out;
    const auto pct = [](double x) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(2);
        s << 100.0 * x << "%";
        return s.str();
    };
    out << "WER " << pct(report.corpus.wer) << " (" << report.corpus.word_edits
        << "/" << report.corpus.ref_words << ")  CER "
        << pct(report.corpus.cer) << " (" << report.corpus.char_edits << "/"
        << report.corpus.ref_chars << ")\n";
    const auto& b = report.buckets;
    out << "short (<=" << b.threshold_words << " words): ";
    if (b.short_bucket.pairs > 0) {
        out << "WER " << pct(b.short_bucket.wer) << " over "
            << b.short_bucket.pairs << " pairs";
    } else {
        out << "empty";
    }
    out << "\nlong  (>" << b.threshold_words << " words): ";
    if (b.long_bucket.pairs > 0) {
        out << "WER " << pct(b.long_bucket.wer) << " over " << b.long_bucket.pairs
            << " pairs";
    } else {
        out << "empty";
    }
    out << "\nrelative increase: ";
    if (b.increase_defined) {
        out << (b.relative_increase >= 0 ? "+" : "") << pct(b.relative_increase);
    } else {
        out << "undefined";
    }
    out << "\n";
    if (!report.bias.empty()) {
        out << "\nover-produced words:\n";
        for (const BiasEntry& entry : report.bias) {
            out << "  " << entry.word << "  score "
                << entry.score << "  hyp " << entry.hyp_count << "  ref "
                << entry.ref_count << "\n";
        }
    }
    if (!report.diffs.empty()) {
        out << "\ndiffs:\n";
        for (const PairDiff& diff : report.diffs) {
            out << "[" << diff.id << "]\n";
            for (const DiffEntry& entry : diff.entries) {
                out << "  " << entry.label;
                for (size_t pad = entry.label.size(); pad < 6; ++pad) out << ' ';
                if (entry.label == "ins") {
                    out << "-> " << entry.hyp_text;
                } else if (entry.label == "del") {
                    out << entry.ref_text << " ->";
                } else {
                    out << entry.ref_text << " -> " << entry.hyp_text;
                }
                out << "\n";
            }
        }
    }
    return out.str();
}

namespace {

std::map<std::string, std::string> read_tsv_texts(
    const std::string& path, std::vector<std::string>* order) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open " + path);
    std::map<std::string, std::string> rows;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        require(tab != std::string::npos, ErrorCode::MalformedRow,
                path + " line " + std::to_string(line_no) + ": expected id<TAB>text");
        const std::string id = line.substr(0, tab);
        const std::string text = line.substr(tab + 1);
        require(!id.empty(), ErrorCode::MalformedRow,
                path + " line " + std::to_string(line_no) + ": empty id");
        require(text.find('\t') == std::string::npos, ErrorCode::MalformedRow,
                path + " line " + std::to_string(line_no) + ": too many columns");
        require(rows.emplace(id, text).second, ErrorCode::DuplicateId,
                path + " line " + std::to_string(line_no) + ": duplicate id " + id);
        if (order != nullptr) order->push_back(id);
    }
    return rows;
}

// A pair for every reference id, in reference order; ids must match exactly
// in both directions.
std::vector<EvalPair> join_texts(const std::map<std::string, std::string>& refs,
                                 const std::vector<std::string>& ref_order,
                                 const std::map<std::string, std::string>& hyps) {
    for (const auto& [id, text] : hyps) {
        require(refs.count(id) == 1, ErrorCode::NotFound,
                "hypothesis id " + id + " has no reference");
    }
    std::vector<EvalPair> pairs;
    for (const std::string& id : ref_order) {
        auto it = hyps.find(id);
        require(it != hyps.end(), ErrorCode::NotFound,
                "reference id " + id + " has no hypothesis");
        pairs.push_back({id, refs.at(id), it->second});
    }
    return pairs;
}

}  // namespace

std::vector<EvalPair> load_pairs(const std::string& reference_tsv,
                                 const std::string& hypothesis_tsv) {
    std::vector<std::string> ref_order;
    const auto refs = read_tsv_texts(reference_tsv, &ref_order);
    return join_texts(refs, ref_order, read_tsv_texts(hypothesis_tsv, nullptr));
}

std::vector<EvalPair> pairs_from_manifest(const Manifest& manifest,
                                          const std::string& hypothesis_tsv) {
    require_transcripts(manifest);
    std::map<std::string, std::string> refs;
    std::vector<std::string> ref_order;
    for (const auto& rec : manifest.records) {
        refs.emplace(rec.id, normalize_transcript(rec.transcript));
        ref_order.push_back(rec.id);
    }
    return join_texts(refs, ref_order, read_tsv_texts(hypothesis_tsv, nullptr));
}

}  // namespace hutk
