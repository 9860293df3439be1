// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "trace_forge/abstraction.hpp"
#include "trace_forge/dag.hpp"
#include "trace_forge/judge.hpp"
#include "trace_forge/trace.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace trace_forge {

/// Traces with verified_correct set, in input order.
std::vector<ReasoningTrace> verify_filter(std::span<const ReasoningTrace> traces);

/// Unordered pair of positions into one prompt's trace list, first < second.
struct TracePair {
    std::size_t first = 0;
    std::size_t second = 0;
    friend auto operator<=>(const TracePair&, const TracePair&) = default;
};

inline constexpr std::size_t kDefaultMaxPairs = 4;

/// Draws min(max_pairs, C(n,2)) distinct pairs without replacement. Pairs
/// spanning two model families are drawn before same-family pairs. The
/// stream depends on `seed` and the prompt id of the first trace; the result
/// is returned in (first, second) order.
std::vector<TracePair> sample_pairs(std::span<const ReasoningTrace> traces, std::size_t max_pairs, std::uint64_t seed);

struct AnalysisOptions {
    std::size_t pool_cap = kDefaultPoolCap;
    std::map<ModelFamily, KeywordSet> keywords;  // missing families use default_keywords
};

/// One trace carried through partitioning, DAG construction and both
/// abstractions.
struct AnalyzedTrace {
    ReasoningTrace trace;
    std::vector<Step> steps;
    ReasoningDag dag;  // collapsed, with summaries filled in
    MacroAbstraction macro;
    MicroAbstraction micro;

    EvaluationSide side() const { return {trace.id, macro.text(), micro.text}; }
};

KeywordSet keywords_for(const AnalysisOptions& options, ModelFamily family);

AnalyzedTrace analyze_trace(const ReasoningTrace& trace, Judge& judge, const AnalysisOptions& options = {});

/// Short stable id of a DAG's structure and text: "<trace id>@<hex>".
std::string dag_fingerprint(const ReasoningDag& dag);

struct PreferenceRecord {
    std::string prompt_id;
    std::string prompt;
    std::string chosen;
    std::string rejected;
    nlohmann::json meta;
};

/// {"prompt","chosen","rejected","meta"}.
nlohmann::json to_json(const PreferenceRecord& record);

struct DatasetConfig {
    std::size_t max_pairs = kDefaultMaxPairs;
    std::uint64_t seed = 0;
    std::size_t concurrency = 1;  // prompts in flight
    std::size_t repeats = 3;
    AnalysisOptions analysis;
};

struct DatasetStats {
    std::size_t prompts = 0;
    std::size_t traces = 0;
    std::size_t verified_traces = 0;
    std::size_t pairs_attempted = 0;
    std::size_t pairs_discarded = 0;
    std::size_t pairs_failed = 0;  // judge or analysis error, logged and skipped
    std::size_t pairs_emitted = 0;
    std::map<std::string, std::size_t> family_mix;  // "fam_a+fam_b" over emitted pairs, sorted names
};

struct DatasetResult {
    std::vector<PreferenceRecord> records;  // sorted by prompt id, then pair key
    std::vector<PairJudgment> judgments;    // every completed judgment, same order
    DatasetStats stats;
};

DatasetResult build_dataset(std::span<const ReasoningTrace> traces, Judge& judge, const DatasetConfig& config = {});

std::string records_to_jsonl(std::span<const PreferenceRecord> records);
std::string stats_csv(const DatasetStats& stats);

// -- Bradley-Terry scoring ---------------------------------------------------

struct ScoredPair {
    double score_chosen = 0.0;
    double score_rejected = 0.0;
};

/// -ln sigmoid(score_chosen - score_rejected), stable for large |delta|.
double bt_loss(const ScoredPair& pair);

struct AccuracyReport {
    double accuracy = 0.0;  // correct / (total - ties); NaN when every pair ties
    std::size_t correct = 0;
    std::size_t ties = 0;
    std::size_t total = 0;
};

/// Throws Error{EmptyInput} on an empty sequence.
AccuracyReport pairwise_accuracy(std::span<const ScoredPair> scored, double tie_epsilon = 0.0);

}  // namespace trace_forge
