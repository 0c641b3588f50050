#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hutk/manifest.hpp"

namespace hutk {

struct EvalPair {
    std::string id;
    std::string reference;
    std::string hypothesis;
};

struct EditOps {
    int64_t distance = 0;
    int64_t subs = 0;
    int64_t ins = 0;
    int64_t dels = 0;
};

enum class EditOp { Match, Sub, Ins, Del };

struct AlignedOp {
    EditOp op;
    std::string ref_token;  // empty for insertions
    std::string hyp_token;  // empty for deletions
};

// Levenshtein with unit costs; traceback ties prefer substitution over
// deletion over insertion.
EditOps edit_distance(const std::vector<std::string>& ref,
                      const std::vector<std::string>& hyp,
                      std::vector<AlignedOp>* alignment = nullptr);

std::vector<std::string> word_tokens(const std::string& text);
std::vector<std::string> char_tokens(const std::string& text);

struct CorpusScore {
    double wer = 0.0;
    double cer = 0.0;
    int64_t pairs = 0;
    int64_t word_edits = 0;
    int64_t ref_words = 0;
    int64_t char_edits = 0;
    int64_t ref_chars = 0;
};

// Pooled rates: total edits over total reference tokens, never a mean of
// per-pair rates. Characters include spaces.
CorpusScore score_corpus(const std::vector<EvalPair>& pairs);

struct BucketReport {
    int64_t threshold_words = 3;
    CorpusScore short_bucket;  // reference length <= threshold
    CorpusScore long_bucket;
    bool increase_defined = false;
    double relative_increase = 0.0;  // (short - long) / long when defined
};

BucketReport bucket_report(const std::vector<EvalPair>& pairs,
                           int64_t threshold_words = 3);

struct BiasEntry {
    std::string word;
    int64_t hyp_count = 0;
    int64_t ref_count = 0;
    double score = 0.0;  // (hyp_count + 1) / (ref_count + 1)
};

// Words over-produced by the hypotheses, smoothed frequency ratio, restricted
// to words with at least min_count hypothesis occurrences; ties alphabetical.
std::vector<BiasEntry> bias_report(const std::vector<EvalPair>& pairs,
                                   int64_t top_k,
                                   int64_t min_count = 5);

struct DiffEntry {
    std::string label;  // sub | ins | del | split | merge
    std::string ref_text;
    std::string hyp_text;
};

struct PairDiff {
    std::string id;
    std::vector<DiffEntry> entries;  // matches omitted
    EditOps ops;                     // underlying word-level breakdown
};

// Word alignment with sub+ins runs whose hypothesis concatenation equals the
// reference word relabeled split, and the dual relabeled merge.
PairDiff diff_pair(const EvalPair& pair);

struct EvalReport {
    CorpusScore corpus;
    BucketReport buckets;
    std::vector<BiasEntry> bias;
    std::vector<PairDiff> diffs;
};

EvalReport evaluate_corpus(const std::vector<EvalPair>& pairs,
                           int64_t threshold_words = 3, int64_t bias_top_k = 10);

std::string report_json(const EvalReport& report);
std::string report_text(const EvalReport& report);

// Reads id<TAB>text TSVs and joins them on id; every reference id must have a
// hypothesis and vice versa.
std::vector<EvalPair> load_pairs(const std::string& reference_tsv,
                                 const std::string& hypothesis_tsv);

// References taken from manifest transcripts (normalized), joined with a
// hypothesis TSV under the same rules as load_pairs.
std::vector<EvalPair> pairs_from_manifest(const Manifest& manifest,
                                          const std::string& hypothesis_tsv);

}  // namespace hutk
