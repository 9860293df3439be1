// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/dataset.hpp"

#include "trace_forge/error.hpp"
#include "trace_forge/log.hpp"
#include "trace_forge/parallel.hpp"
#include "trace_forge/util.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

namespace trace_forge {

std::vector<ReasoningTrace> verify_filter(std::span<const ReasoningTrace> traces) {
    std::vector<ReasoningTrace> out;
    for (const auto& t : traces)
        if (t.verified_correct) out.push_back(t);
    return out;
}

std::vector<TracePair> sample_pairs(std::span<const ReasoningTrace> traces, std::size_t max_pairs, std::uint64_t seed) {
    if (max_pairs < 1) throw Error(ErrorCode::InvalidArgument, "max_pairs must be at least 1");
    if (traces.size() < 2) return {};

    std::vector<TracePair> all;
    for (std::size_t i = 0; i < traces.size(); ++i)
        for (std::size_t j = i + 1; j < traces.size(); ++j) all.push_back({i, j});

    // Fisher-Yates with plain modulo draws, so the sequence does not depend on
    // the standard library's distribution implementation.
    std::mt19937_64 rng(mix_seed(seed, fnv1a64(traces.front().prompt_id)));
    for (std::size_t i = all.size() - 1; i > 0; --i) std::swap(all[i], all[rng() % (i + 1)]);
    std::stable_partition(all.begin(), all.end(), [&](const TracePair& p) {
        return traces[p.first].model_family != traces[p.second].model_family;
    });

    all.resize(std::min(max_pairs, all.size()));
    std::sort(all.begin(), all.end());
    return all;
}

KeywordSet keywords_for(const AnalysisOptions& options, ModelFamily family) {
    auto it = options.keywords.find(family);
    return it != options.keywords.end() ? it->second : default_keywords(family);
}

AnalyzedTrace analyze_trace(const ReasoningTrace& trace, Judge& judge, const AnalysisOptions& options) {
    if (trace.text.find_first_not_of(" \n\t") == std::string::npos)
        throw Error(ErrorCode::EmptyInput, "trace " + trace.id + " has no reasoning text");
    AnalyzedTrace out;
    out.trace = trace;
    out.steps = partition_trace(trace.text, keywords_for(options, trace.model_family));
    out.dag = build_dag(trace.id, out.steps, judge, {options.pool_cap});

    std::map<NodeId, std::string> summaries;
    for (auto& node : out.dag.nodes) {
        node.summary = judge.summarize_supernode(node.text);
        summaries[node.id] = *node.summary;
    }
    out.macro = linearize_macro(out.dag, summaries);
    out.micro = dominant_path(out.dag, default_answer_locator(trace.final_answer));
    return out;
}

std::string dag_fingerprint(const ReasoningDag& dag) {
    ReasoningDag bare = dag;
    for (auto& node : bare.nodes) node.summary.reset();
    return dag.trace_id + "@" + to_hex(fnv1a64(dag_to_json(bare).dump()));
}

nlohmann::json to_json(const PreferenceRecord& record) {
    return {{"prompt", record.prompt}, {"chosen", record.chosen}, {"rejected", record.rejected}, {"meta", record.meta}};
}

namespace {

nlohmann::json judgment_summary(const PairJudgment& judgment) {
    nlohmann::json votes = nlohmann::json::object();
    for (Order order : {Order::Forward, Order::Reversed}) {
        nlohmann::json tally = {{"a_wins", 0}, {"b_wins", 0}, {"tie", 0}};
        for (const auto& run : judgment.runs)
            if (run.order == order) {
                auto& slot = tally[std::string(to_string(run.overall.verdict))];
                slot = slot.get<int>() + 1;
            }
        votes[std::string(to_string(order))] = tally;
    }
    return {{"trace_a_id", judgment.trace_a_id},
            {"trace_b_id", judgment.trace_b_id},
            {"final_label", std::string(to_string(judgment.final_label))},
            {"runs", judgment.runs.size()},
            {"votes", votes}};
}

std::string family_key(ModelFamily a, ModelFamily b) {
    std::string x(to_string(a));
    std::string y(to_string(b));
    if (y < x) std::swap(x, y);
    return x + "+" + y;
}

struct PairOutcome {
    std::string pair_key;
    std::optional<PairJudgment> judgment;
    std::optional<PreferenceRecord> record;
    std::string family;
};

struct PromptOutcome {
    std::size_t traces = 0;
    std::size_t verified = 0;
    std::vector<PairOutcome> pairs;
};

PromptOutcome run_prompt(const std::string& prompt_id, const std::vector<ReasoningTrace>& traces, Judge& judge,
                         const DatasetConfig& config) {
    PromptOutcome outcome;
    outcome.traces = traces.size();
    const std::vector<ReasoningTrace> verified = verify_filter(traces);
    outcome.verified = verified.size();

    // Each trace is analyzed at most once; a failure poisons only the pairs using it.
    std::vector<std::optional<AnalyzedTrace>> analyzed(verified.size());
    std::vector<std::string> analysis_error(verified.size());
    auto analysis = [&](std::size_t i) -> const AnalyzedTrace* {
        if (analyzed[i]) return &*analyzed[i];
        if (!analysis_error[i].empty()) return nullptr;
        try {
            analyzed[i] = analyze_trace(verified[i], judge, config.analysis);
            return &*analyzed[i];
        } catch (const std::exception& e) {
            analysis_error[i] = e.what();
            log::warn("trace_analysis_failed", {{"prompt_id", prompt_id}, {"trace_id", verified[i].id}, {"error", e.what()}});
            return nullptr;
        }
    };

    for (const TracePair& pair : sample_pairs(verified, config.max_pairs, config.seed)) {
        const ReasoningTrace& ta = verified[pair.first];
        const ReasoningTrace& tb = verified[pair.second];
        PairOutcome po;
        po.pair_key = ta.id + "|" + tb.id;
        po.family = family_key(ta.model_family, tb.model_family);
        const AnalyzedTrace* a = analysis(pair.first);
        const AnalyzedTrace* b = analysis(pair.second);
        if (a && b) {
            try {
                po.judgment = robust_compare(judge, a->side(), b->side(), {config.repeats, 1});
            } catch (const std::exception& e) {
                log::warn("pair_judgment_failed", {{"prompt_id", prompt_id}, {"pair", po.pair_key}, {"error", e.what()}});
            }
        }
        if (po.judgment && po.judgment->final_label != FinalLabel::Discarded) {
            const bool a_wins = po.judgment->final_label == FinalLabel::AWins;
            const AnalyzedTrace& chosen = a_wins ? *a : *b;
            const AnalyzedTrace& rejected = a_wins ? *b : *a;
            PreferenceRecord rec;
            rec.prompt_id = prompt_id;
            rec.prompt = chosen.trace.prompt.empty() ? prompt_id : chosen.trace.prompt;
            rec.chosen = chosen.trace.text;
            rec.rejected = rejected.trace.text;
            rec.meta = {{"prompt_id", prompt_id},
                        {"chosen_id", chosen.trace.id},
                        {"rejected_id", rejected.trace.id},
                        {"judgment", judgment_summary(*po.judgment)},
                        {"families",
                         {{"chosen", std::string(to_string(chosen.trace.model_family))},
                          {"rejected", std::string(to_string(rejected.trace.model_family))}}},
                        {"dag_ids", {{"chosen", dag_fingerprint(chosen.dag)}, {"rejected", dag_fingerprint(rejected.dag)}}},
                        {"template_hash", po.judgment->template_hash}};
            po.record = std::move(rec);
        }
        outcome.pairs.push_back(std::move(po));
    }
    std::sort(outcome.pairs.begin(), outcome.pairs.end(),
              [](const PairOutcome& x, const PairOutcome& y) { return x.pair_key < y.pair_key; });
    return outcome;
}

}  // namespace

DatasetResult build_dataset(std::span<const ReasoningTrace> traces, Judge& judge, const DatasetConfig& config) {
    if (config.max_pairs < 1) throw Error(ErrorCode::InvalidArgument, "max_pairs must be at least 1");
    if (config.repeats < 1) throw Error(ErrorCode::InvalidArgument, "repeats must be at least 1");
    if (config.concurrency < 1) throw Error(ErrorCode::InvalidArgument, "concurrency must be at least 1");

    std::map<std::string, std::vector<ReasoningTrace>> by_prompt;
    for (const auto& t : traces) by_prompt[t.prompt_id].push_back(t);
    std::vector<const std::pair<const std::string, std::vector<ReasoningTrace>>*> prompts;
    for (const auto& entry : by_prompt) prompts.push_back(&entry);

    std::vector<PromptOutcome> outcomes(prompts.size());
    parallel_for(prompts.size(), config.concurrency, [&](std::size_t i) {
        outcomes[i] = run_prompt(prompts[i]->first, prompts[i]->second, judge, config);
    });

    DatasetResult result;
    result.stats.prompts = prompts.size();
    for (auto& outcome : outcomes) {
        result.stats.traces += outcome.traces;
        result.stats.verified_traces += outcome.verified;
        for (auto& pair : outcome.pairs) {
            ++result.stats.pairs_attempted;
            if (!pair.judgment) {
                ++result.stats.pairs_failed;
                continue;
            }
            result.judgments.push_back(std::move(*pair.judgment));
            if (!pair.record) {
                ++result.stats.pairs_discarded;
                continue;
            }
            ++result.stats.pairs_emitted;
            ++result.stats.family_mix[pair.family];
            result.records.push_back(std::move(*pair.record));
        }
    }
    log::info("dataset_built", {{"prompts", result.stats.prompts},
                                {"attempted", result.stats.pairs_attempted},
                                {"emitted", result.stats.pairs_emitted},
                                {"discarded", result.stats.pairs_discarded},
                                {"failed", result.stats.pairs_failed}});
    return result;
}

std::string records_to_jsonl(std::span<const PreferenceRecord> records) {
    std::string out;
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    return out;
}

std::string stats_csv(const DatasetStats& stats) {
    std::string out = "metric,value\n";
    auto row = [&](const std::string& k, std::size_t v) { out += k + "," + std::to_string(v) + "\n"; };
    row("prompts", stats.prompts);
    row("traces", stats.traces);
    row("verified_traces", stats.verified_traces);
    row("pairs_attempted", stats.pairs_attempted);
    row("pairs_discarded", stats.pairs_discarded);
    row("pairs_failed", stats.pairs_failed);
    row("pairs_emitted", stats.pairs_emitted);
    for (const auto& [mix, n] : stats.family_mix) row("family_mix:" + mix, n);
    return out;
}

double bt_loss(const ScoredPair& pair) {
    if (!std::isfinite(pair.score_chosen) || !std::isfinite(pair.score_rejected))
        throw Error(ErrorCode::NonFinite, "pair scores must be finite");
    const double delta = pair.score_chosen - pair.score_rejected;
    if (!std::isfinite(delta)) throw Error(ErrorCode::NonFinite, "score difference overflows");
    // -ln sigmoid(d) = log1p(exp(-d)) for d >= 0, and -d + log1p(exp(d)) otherwise.
    return delta >= 0.0 ? std::log1p(std::exp(-delta)) : -delta + std::log1p(std::exp(delta));
}

AccuracyReport pairwise_accuracy(std::span<const ScoredPair> scored, double tie_epsilon) {
    if (scored.empty()) throw Error(ErrorCode::EmptyInput, "no scored pairs");
    if (!(tie_epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "tie_epsilon must be non-negative");
    AccuracyReport r;
    r.total = scored.size();
    for (const auto& p : scored) {
        if (!std::isfinite(p.score_chosen) || !std::isfinite(p.score_rejected))
            throw Error(ErrorCode::NonFinite, "pair scores must be finite");
        const double delta = p.score_chosen - p.score_rejected;
        if (std::abs(delta) <= tie_epsilon) ++r.ties;
        else if (delta > tie_epsilon) ++r.correct;
    }
    r.accuracy = r.ties == r.total ? std::nan("")
                                   : static_cast<double>(r.correct) / static_cast<double>(r.total - r.ties);
    return r;
}

}  // namespace trace_forge
