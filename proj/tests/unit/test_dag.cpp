// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "dag_checks.hpp"
#include "synthetic.hpp"

#include "trace_forge/dag.hpp"
#include "trace_forge/error.hpp"
#include "trace_forge/scripted_judge.hpp"

#include <doctest.h>

using namespace trace_forge;

namespace {

ScriptedJudge judge_with_parents(std::map<std::size_t, std::vector<NodeId>> parents) {
    ScriptedRules rules;
    rules.parents = std::move(parents);
    return ScriptedJudge(rules);
}

// Answers from a fixed list, one reply per call; may throw a given code instead.
class QueueSelector final : public ParentSelector {
public:
    struct Reply {
        std::vector<NodeId> ids;
        std::optional<ErrorCode> error;
    };
    explicit QueueSelector(std::vector<Reply> replies) : m_replies(std::move(replies)) {}
    std::vector<NodeId> select_parents(const Step&, std::span<const PoolEntry>) override {
        const Reply r = m_replies.at(std::min(calls++, m_replies.size() - 1));
        if (r.error) throw Error(*r.error, "scripted failure");
        return r.ids;
    }
    std::size_t calls = 0;

private:
    std::vector<Reply> m_replies;
};

}  // namespace

TEST_CASE("single step gives a single node") {
    auto judge = judge_with_parents({});
    const auto dag = build_dag("t", tf_test::numbered_steps(1), judge);
    REQUIRE(dag.nodes.size() == 1);
    CHECK(dag.edges.empty());
    CHECK(dag.nodes[0].roles == (kRoleRoot | kRoleTerminal));
    CHECK_THROWS_AS(build_dag("t", {}, judge), Error);
}

TEST_CASE("previous-step parents collapse into one super-node") {
    ScriptedJudge judge(ScriptedRules{});
    const auto steps = tf_test::numbered_steps(6);
    const auto dag = build_dag("t", steps, judge);
    REQUIRE(dag.nodes.size() == 1);
    CHECK(dag.nodes[0].step_indices == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    CHECK(dag.raw_edges.size() == 5);
    CHECK(dag.nodes[0].text.find(steps[5].text) != std::string::npos);
}

TEST_CASE("fork and merge shape") {
    auto judge = judge_with_parents({{1, {0}}, {2, {0}}, {3, {0}}, {4, {1, 2, 3}}});
    const auto dag = build_dag("t", tf_test::numbered_steps(5), judge);
    CHECK(dag.edges == std::set<Edge>{{0, 1}, {0, 2}, {0, 3}, {1, 4}, {2, 4}, {3, 4}});
    CHECK(dag.node(0).roles == (kRoleRoot | kRoleBranching));
    CHECK(dag.node(4).roles == (kRoleMerging | kRoleTerminal));
    CHECK(dag.node(2).roles == 0);
    CHECK_FALSE(find_violation(dag));
}

TEST_CASE("a linear run inside a branch merges") {
    auto judge = judge_with_parents({{1, {0}}, {2, {0}}, {3, {1}}, {4, {2, 3}}});
    const auto dag = build_dag("t", tf_test::numbered_steps(5), judge);
    CHECK(dag.node_ids() == std::vector<NodeId>{0, 1, 2, 4});
    CHECK(dag.node(1).step_indices == std::vector<std::size_t>{1, 3});
    CHECK(dag.edges == std::set<Edge>{{0, 1}, {0, 2}, {1, 4}, {2, 4}});
}

TEST_CASE("diamond is left alone by collapse") {
    const auto dag = tf_test::raw_dag(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
    const auto collapsed = collapse_chains(dag);
    CHECK(collapsed.edges == dag.edges);
    CHECK(collapsed.nodes.size() == 4);
}

TEST_CASE("attachment pool examples") {
    SUBCASE("chain") {
        const auto pool = attachment_pool(tf_test::raw_dag(3, {{0, 1}, {1, 2}}), 3);
        CHECK(pool.main_branch_ids == std::vector<NodeId>{0, 1, 2});
        CHECK(pool.endpoint_ids.empty());
    }
    SUBCASE("one side branch") {
        const auto pool = attachment_pool(tf_test::raw_dag(3, {{0, 1}, {0, 2}}), 3);
        CHECK(pool.main_branch_ids == std::vector<NodeId>{0, 2});
        CHECK(pool.endpoint_ids == std::vector<NodeId>{1});
    }
    SUBCASE("merge follows the largest parent") {
        const auto pool = attachment_pool(tf_test::raw_dag(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}}), 4);
        CHECK(pool.main_branch_ids == std::vector<NodeId>{0, 2, 3});
        CHECK(pool.endpoint_ids.empty());  // node 1 has a child, so it is not a leaf
    }
    SUBCASE("endpoint cap keeps the most recent leaves") {
        std::set<Edge> edges;
        for (NodeId i = 1; i <= 20; ++i) edges.insert({0, i});
        const auto dag = tf_test::raw_dag(21, edges);
        const auto pool = attachment_pool(dag, 21, 8);
        CHECK(pool.main_branch_ids == std::vector<NodeId>{0, 20});
        // oracle: leaves off the branch sorted by id descending, truncated
        std::vector<NodeId> expected;
        for (NodeId i = 19; i >= 1 && expected.size() < 8; --i) expected.push_back(i);
        CHECK(pool.endpoint_ids == expected);
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(attachment_pool(ReasoningDag{}, 1), Error);
        CHECK_THROWS_AS(attachment_pool(tf_test::raw_dag(2, {{0, 1}}), 1), Error);
    }
}

TEST_CASE("invalid parent answers are re-queried once, then fall back") {
    const auto steps = tf_test::numbered_steps(3);
    SUBCASE("out of pool twice") {
        QueueSelector sel({{{77}, std::nullopt}});
        const auto built = build_dag_logged("t", steps, sel);
        REQUIRE(built.decisions.size() == 2);
        for (const auto& d : built.decisions) {
            CHECK(d.queries == 2);
            CHECK(d.fallback);
            CHECK(d.parents == std::vector<NodeId>{d.node - 1});
        }
    }
    SUBCASE("parse failure then a valid answer") {
        QueueSelector sel({{{}, ErrorCode::ParseFailure}, {{0}, std::nullopt}});
        const auto built = build_dag_logged("t", tf_test::numbered_steps(2), sel);
        CHECK(built.decisions[0].queries == 2);
        CHECK_FALSE(built.decisions[0].fallback);
    }
    SUBCASE("empty answer counts as invalid") {
        QueueSelector sel({{{}, std::nullopt}});
        const auto built = build_dag_logged("t", tf_test::numbered_steps(2), sel);
        CHECK(built.decisions[0].fallback);
    }
    SUBCASE("judge outage aborts construction") {
        QueueSelector sel({{{}, ErrorCode::JudgeUnavailable}});
        CHECK_THROWS_AS(build_dag("t", steps, sel), Error);
    }
}

TEST_CASE("randomized construction invariants") {
    for (std::uint64_t seed = 0; seed < 120; ++seed) {
        const auto failure = tf_test::check_construction(seed, 1 + seed % 17);
        INFO("seed " << seed);
        CHECK_FALSE(failure);
        if (failure) MESSAGE(*failure);
    }
}

TEST_CASE("collapse is idempotent and keeps reachability") {
    for (std::uint64_t seed = 0; seed < 150; ++seed) {
        const auto failure = tf_test::check_collapse(seed, 1 + seed % 20);
        INFO("seed " << seed);
        CHECK_FALSE(failure);
        if (failure) MESSAGE(*failure);
    }
}

TEST_CASE("reachability oracle sanity") {
    const auto r = tf_test::reachability({{0, 1}, {1, 2}, {0, 3}});
    CHECK(r == std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {0, 2}, {1, 2}, {0, 3}});
}

TEST_CASE("DOT export") {
    auto single = tf_test::raw_dag(1, {});
    const std::string dot = export_dot(single);
    CHECK(dot.starts_with("digraph \"synthetic\" {"));
    CHECK(dot.find("n0 [label=\"0 [root terminal]") != std::string::npos);
    CHECK(dot.find("->") == std::string::npos);

    const auto diamond = tf_test::raw_dag(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
    const std::string d = export_dot(diamond);
    std::size_t arrows = 0;
    for (std::size_t p = d.find("->"); p != std::string::npos; p = d.find("->", p + 2)) ++arrows;
    CHECK(arrows == 4);
    CHECK(export_dot(diamond) == d);

    auto quoted = tf_test::raw_dag(1, {});
    quoted.nodes[0].text = "say \"hi\"\nthen \\ go";
    CHECK(export_dot(quoted).find("say \\\"hi\\\" then \\\\ go") != std::string::npos);
}

TEST_CASE("DAG JSON round trip and validation") {
    auto judge = judge_with_parents({{1, {0}}, {2, {0}}, {3, {1}}, {4, {2, 3}}});
    auto dag = build_dag("t", tf_test::numbered_steps(5), judge);
    dag.node(0).summary = "start";
    const auto j = dag_to_json(dag);
    const auto back = dag_from_json(j);
    CHECK(dag_to_json(back) == j);
    CHECK(back.raw_edges == dag.raw_edges);
    CHECK(back.node(0).summary == std::optional<std::string>("start"));

    auto bad = j;
    bad["edges"].push_back({4, 0});
    CHECK_THROWS_AS(dag_from_json(bad), Error);
    auto two_roots = j;
    two_roots["edges"] = nlohmann::json::array({{0, 1}});
    CHECK_THROWS_AS(dag_from_json(two_roots), Error);
    CHECK_THROWS_AS(dag_from_json(nlohmann::json::object()), Error);
}
