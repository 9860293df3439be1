// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "trace_forge/judge.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace trace_forge {

/// How the scripted judge decides a pairwise comparison when no canned reply
/// matches. Rules see the two presented abstractions only.
struct VerdictRule {
    enum class Kind {
        FirstPresented,   // position bias: whatever is shown first wins
        SecondPresented,
        Shorter,          // fewer bytes wins, equal length ties
        Longer,
        Tie,
        Contains,         // the side containing `marker` wins; both or neither ties
    };
    Kind kind = Kind::Tie;
    std::string marker;

    /// "first_presented", "second_presented", "shorter", "longer", "tie", "contains:<marker>".
    static VerdictRule parse(std::string_view spec);
    std::string describe() const;
    Verdict apply(std::string_view first, std::string_view second) const;
};

/// Parent rule applied when no explicit per-step mapping exists.
struct ParentRule {
    enum class Kind { Previous, Root, AllPool, Random };
    Kind kind = Kind::Previous;
    std::uint64_t seed = 0;

    /// "previous", "root", "all", "random:<seed>".
    static ParentRule parse(std::string_view spec);
};

/// Rules file contents. JSON layout:
///   {"parents": {"<step>": [ids...]}, "default_parents": "previous",
///    "summary": "<fixed text>" | null, "verdict_rule": "shorter",
///    "dimension_rules": {"micro_efficiency": "longer"}, "aggregate": "majority",
///    "responses": {"<fingerprint>": "<raw reply>"}}
/// "responses" replays raw replies keyed by request fingerprint (see
/// request_fingerprint) and takes precedence over every rule.
struct ScriptedRules {
    std::map<std::size_t, std::vector<NodeId>> parents;
    ParentRule default_parents;
    std::optional<std::string> summary;  // unset: first sentence of the node text
    VerdictRule verdict_rule;
    std::map<Dimension, VerdictRule> dimension_rules;
    std::optional<VerdictRule> aggregate_rule;  // unset: majority vote
    std::map<std::string, std::string> responses;
    std::size_t summary_max_chars = 240;

    static ScriptedRules from_json(const nlohmann::json& j);
    static ScriptedRules load(const std::string& path);
};

/// Deterministic offline judge. Identical inputs always produce identical
/// outputs, so every pipeline stage is byte-reproducible under it.
class ScriptedJudge final : public Judge {
public:
    explicit ScriptedJudge(ScriptedRules rules, PromptTemplates templates = PromptTemplates::defaults());

    std::vector<NodeId> select_parents(const Step& step, std::span<const PoolEntry> pool) override;
    std::string summarize_supernode(std::string_view node_text) override;
    DimensionVerdict judge_dimension(Dimension dimension, std::string_view first, std::string_view second,
                                     const EvalContext& context) override;
    OverallVerdict aggregate(const std::array<DimensionVerdict, 4>& verdicts, const EvalContext& context) override;
    std::string template_hash() const override { return m_template_hash; }

    const ScriptedRules& rules() const { return m_rules; }

private:
    const std::string* canned(std::string_view kind, std::size_t repeat, const std::string& prompt) const;

    ScriptedRules m_rules;
    PromptTemplates m_templates;
    std::string m_template_hash;
};

}  // namespace trace_forge
