// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "synthetic.hpp"

#include "trace_forge/abstraction.hpp"
#include "trace_forge/dag.hpp"
#include "trace_forge/mdp.hpp"
#include "trace_forge/reward.hpp"
#include "trace_forge/scripted_judge.hpp"
#include "trace_forge/trace.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace trace_forge;

namespace {

void BM_PartitionTrace(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const std::string text = tf_test::random_trace_text(rng, static_cast<std::size_t>(state.range(0)));
    const KeywordSet kw = default_keywords(ModelFamily::Qwen3);
    for (auto _ : state) benchmark::DoNotOptimize(partition_trace(text, kw));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_PartitionTrace)->Arg(16)->Arg(256)->Arg(2048);

void BM_BuildDag(benchmark::State& state) {
    ScriptedRules rules;
    rules.default_parents = ParentRule::parse("random:11");
    ScriptedJudge judge(rules);
    const auto steps = tf_test::numbered_steps(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(build_dag("bench", steps, judge));
}
BENCHMARK(BM_BuildDag)->Arg(16)->Arg(128)->Arg(512);

void BM_Abstractions(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto dag = collapse_chains(tf_test::raw_dag(n, tf_test::random_dag_edges(rng, n)));
    std::map<NodeId, std::string> summaries;
    for (const auto& node : dag.nodes) summaries[node.id] = "summary";
    const auto locator = default_answer_locator("7");
    for (auto _ : state) {
        benchmark::DoNotOptimize(linearize_macro(dag, summaries));
        benchmark::DoNotOptimize(dominant_path(dag, locator));
    }
}
BENCHMARK(BM_Abstractions)->Arg(64)->Arg(512);

void BM_ValueIteration(benchmark::State& state) {
    const auto s = static_cast<std::size_t>(state.range(0));
    const auto mdp = random_mdp(3, s, 4, 0.9);
    for (auto _ : state) benchmark::DoNotOptimize(value_iteration(mdp));
}
BENCHMARK(BM_ValueIteration)->Arg(8)->Arg(64);

void BM_GroupAdvantage(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::vector<double> rewards(static_cast<std::size_t>(state.range(0)));
    for (auto& r : rewards) r = gated_reward({static_cast<int>(rng() % 2), static_cast<double>(rng() % 100) / 10.0});
    for (auto _ : state) benchmark::DoNotOptimize(group_advantage(rewards));
}
BENCHMARK(BM_GroupAdvantage)->Arg(8)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
