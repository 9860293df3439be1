// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "synthetic.hpp"

#include "trace_forge/abstraction.hpp"
#include "trace_forge/error.hpp"

#include <doctest.h>

#include <functional>

using namespace trace_forge;

namespace {

std::map<NodeId, std::string> summaries_for(const ReasoningDag& dag) {
    std::map<NodeId, std::string> out;
    for (const auto& n : dag.nodes) out[n.id] = "summary of " + std::to_string(n.id);
    return out;
}

// Longest path into each node by memoized recursion over parents.
std::map<NodeId, std::size_t> depth_oracle(const ReasoningDag& dag) {
    std::map<NodeId, std::size_t> memo;
    std::function<std::size_t(NodeId)> depth = [&](NodeId v) -> std::size_t {
        if (auto it = memo.find(v); it != memo.end()) return it->second;
        std::size_t best = 0;
        for (const auto& [a, b] : dag.edges)
            if (b == v) best = std::max(best, depth(a) + 1);
        return memo[v] = best;
    };
    for (const auto& n : dag.nodes) depth(n.id);
    return memo;
}

std::set<NodeId> ancestors_oracle(const ReasoningDag& dag, NodeId v) {
    std::set<NodeId> out{v};
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& [a, b] : dag.edges)
            if (out.count(b) && out.insert(a).second) grew = true;
    }
    return out;
}

}  // namespace

TEST_CASE("single node header") {
    const auto dag = tf_test::raw_dag(1, {});
    const auto macro = linearize_macro(dag, {{0, "only step"}});
    REQUIRE(macro.lines.size() == 1);
    CHECK(macro.lines[0].header == "[node 0 | depth 0 | root terminal | parents: -]");
    CHECK(macro.text() == "[node 0 | depth 0 | root terminal | parents: -] only step\n");
}

TEST_CASE("diamond headers") {
    const auto dag = tf_test::raw_dag(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
    const auto macro = linearize_macro(dag, summaries_for(dag));
    CHECK(macro.lines[0].header == "[node 0 | depth 0 | root branching | parents: -]");
    CHECK(macro.lines[1].header == "[node 1 | depth 1 | linear | parents: 0]");
    CHECK(macro.lines[3].header == "[node 3 | depth 2 | merging terminal | parents: 1,2]");
}

TEST_CASE("fork and merge depths") {
    const auto dag = tf_test::raw_dag(5, {{0, 1}, {0, 2}, {0, 3}, {1, 4}, {2, 4}, {3, 4}});
    const auto depth = longest_path_depths(dag);
    CHECK(depth == std::map<NodeId, std::size_t>{{0, 0}, {1, 1}, {2, 1}, {3, 1}, {4, 2}});
    CHECK(depth == depth_oracle(dag));
}

TEST_CASE("longest path, not shortest") {
    const auto dag = tf_test::raw_dag(4, {{0, 1}, {1, 2}, {0, 3}, {2, 3}});
    CHECK(longest_path_depths(dag).at(3) == 3);
}

TEST_CASE("missing summary") {
    const auto dag = tf_test::raw_dag(2, {{0, 1}});
    try {
        linearize_macro(dag, {{0, "x"}});
        FAIL("expected MissingSummary");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingSummary);
    }
}

TEST_CASE("dominant path examples") {
    SUBCASE("chain is the whole text") {
        auto dag = tf_test::raw_dag(3, {{0, 1}, {1, 2}});
        const auto micro = dominant_path(dag, default_answer_locator());
        CHECK(micro.node_ids == std::vector<NodeId>{0, 1, 2});
        CHECK(micro.text == "step 0\n\nstep 1\n\nstep 2");
    }
    SUBCASE("dead branch is dropped") {
        auto dag = tf_test::raw_dag(4, {{0, 1}, {1, 3}, {0, 2}});
        dag.node(3).text = "so the answer is \\boxed{12}";
        CHECK(dominant_path(dag, default_answer_locator()).node_ids == std::vector<NodeId>{0, 1, 3});
    }
    SUBCASE("two answer leaves give the union") {
        auto dag = tf_test::raw_dag(5, {{0, 1}, {0, 2}, {1, 3}, {2, 4}});
        dag.node(3).text = "answer 12";
        dag.node(4).text = "again, 12";
        CHECK(dominant_path(dag, default_answer_locator("12")).node_ids == std::vector<NodeId>{0, 1, 2, 3, 4});
    }
    SUBCASE("fallback to the newest leaf") {
        auto dag = tf_test::raw_dag(4, {{0, 1}, {0, 2}, {1, 3}});
        CHECK(dominant_path(dag, default_answer_locator("99")).node_ids == std::vector<NodeId>{0, 1, 3});
    }
    SUBCASE("an answer in an inner node does not count") {
        auto dag = tf_test::raw_dag(3, {{0, 1}, {0, 2}});
        dag.node(0).text = "\\boxed{1}";
        CHECK(dominant_path(dag, default_answer_locator()).node_ids == std::vector<NodeId>{0, 2});
    }
}

TEST_CASE("answer locator") {
    const auto loc = default_answer_locator("42");
    CHECK(loc("thus \\boxed {7}"));
    CHECK(loc("it is 42"));
    CHECK_FALSE(loc("boxed{7}"));
    CHECK_FALSE(default_answer_locator()("it is 42"));
}

TEST_CASE("abstraction properties on random DAGs") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 20;
        auto dag = collapse_chains(tf_test::raw_dag(n, tf_test::random_dag_edges(rng, n)));
        for (auto& node : dag.nodes)
            if (rng() % 3 == 0) node.text += " \\boxed{1}";

        const auto macro = linearize_macro(dag, summaries_for(dag));
        REQUIRE(macro.lines.size() == dag.nodes.size());
        const auto depth = depth_oracle(dag);
        for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
            const auto& node = dag.nodes[i];
            const std::string& header = macro.lines[i].header;
            CHECK(header.starts_with("[node " + std::to_string(node.id) + " | depth " +
                                     std::to_string(depth.at(node.id)) + " | "));
            const bool root = dag.in_degree(node.id) == 0;
            const bool terminal = dag.out_degree(node.id) == 0;
            CHECK((header.find("root") != std::string::npos) == root);
            CHECK((header.find("terminal") != std::string::npos) == terminal);
            CHECK((header.find("branching") != std::string::npos) == (dag.out_degree(node.id) >= 2));
            CHECK((header.find("merging") != std::string::npos) == (dag.in_degree(node.id) >= 2));
        }

        const auto micro = dominant_path(dag, default_answer_locator());
        CHECK(std::is_sorted(micro.node_ids.begin(), micro.node_ids.end()));
        std::set<NodeId> members(micro.node_ids.begin(), micro.node_ids.end());
        std::set<NodeId> expected;
        bool any_answer = false;
        for (const auto& node : dag.nodes) {
            if (dag.out_degree(node.id) == 0 && node.text.find("\\boxed{") != std::string::npos) {
                any_answer = true;
                const auto anc = ancestors_oracle(dag, node.id);
                expected.insert(anc.begin(), anc.end());
            }
        }
        if (!any_answer) {
            NodeId newest = 0;
            for (const auto& node : dag.nodes)
                if (dag.out_degree(node.id) == 0) newest = node.id;
            expected = ancestors_oracle(dag, newest);
        }
        CHECK(members == expected);
        for (NodeId v : members)
            for (NodeId p : dag.parents(v)) CHECK(members.count(p));
    }
}

TEST_CASE("clip for judge") {
    CHECK(clip_for_judge("short", 10) == "short");
    const std::string clipped = clip_for_judge(std::string(100, 'x'), 40);
    CHECK(clipped.size() <= 40);
    CHECK(clipped.ends_with("[... truncated ...]"));
}
