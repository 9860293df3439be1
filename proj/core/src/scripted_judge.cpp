// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/scripted_judge.hpp"

#include "trace_forge/error.hpp"
#include "trace_forge/llm_judge.hpp"
#include "trace_forge/util.hpp"

#include <algorithm>
#include <charconv>
#include <random>

namespace trace_forge {

VerdictRule VerdictRule::parse(std::string_view spec) {
    if (spec == "first_presented") return {Kind::FirstPresented, {}};
    if (spec == "second_presented") return {Kind::SecondPresented, {}};
    if (spec == "shorter") return {Kind::Shorter, {}};
    if (spec == "longer") return {Kind::Longer, {}};
    if (spec == "tie") return {Kind::Tie, {}};
    if (spec.starts_with("contains:") && spec.size() > 9) return {Kind::Contains, std::string(spec.substr(9))};
    throw Error(ErrorCode::InvalidArgument, "unknown verdict rule \"" + std::string(spec) + "\"");
}

std::string VerdictRule::describe() const {
    switch (kind) {
        case Kind::FirstPresented: return "first_presented";
        case Kind::SecondPresented: return "second_presented";
        case Kind::Shorter: return "shorter";
        case Kind::Longer: return "longer";
        case Kind::Tie: return "tie";
        case Kind::Contains: return "contains:" + marker;
    }
    return "tie";
}

Verdict VerdictRule::apply(std::string_view first, std::string_view second) const {
    auto by = [](bool a, bool b) { return a == b ? Verdict::Tie : a ? Verdict::AWins : Verdict::BWins; };
    switch (kind) {
        case Kind::FirstPresented: return Verdict::AWins;
        case Kind::SecondPresented: return Verdict::BWins;
        case Kind::Shorter:
            return first.size() == second.size() ? Verdict::Tie
                                                 : by(first.size() < second.size(), second.size() < first.size());
        case Kind::Longer:
            return first.size() == second.size() ? Verdict::Tie
                                                 : by(first.size() > second.size(), second.size() > first.size());
        case Kind::Tie: return Verdict::Tie;
        case Kind::Contains:
            return by(first.find(marker) != std::string_view::npos, second.find(marker) != std::string_view::npos);
    }
    return Verdict::Tie;
}

ParentRule ParentRule::parse(std::string_view spec) {
    if (spec == "previous") return {Kind::Previous, 0};
    if (spec == "root") return {Kind::Root, 0};
    if (spec == "all") return {Kind::AllPool, 0};
    if (spec.starts_with("random:")) {
        const std::string_view digits = spec.substr(7);
        std::uint64_t seed = 0;
        const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
        if (ec != std::errc{} || end != digits.data() + digits.size() || digits.empty())
            throw Error(ErrorCode::InvalidArgument, "random parent rule needs a numeric seed: \"" + std::string(spec) + "\"");
        return {Kind::Random, seed};
    }
    throw Error(ErrorCode::InvalidArgument, "unknown parent rule \"" + std::string(spec) + "\"");
}

ScriptedRules ScriptedRules::from_json(const nlohmann::json& j) {
    ScriptedRules rules;
    try {
        if (j.contains("parents")) {
            for (const auto& [step, ids] : j.at("parents").items())
                rules.parents[std::stoull(step)] = ids.get<std::vector<NodeId>>();
        }
        if (j.contains("default_parents")) rules.default_parents = ParentRule::parse(j["default_parents"].get<std::string>());
        if (j.contains("summary") && j["summary"].is_string()) rules.summary = j["summary"].get<std::string>();
        if (j.contains("summary_max_chars")) rules.summary_max_chars = j["summary_max_chars"].get<std::size_t>();
        if (j.contains("verdict_rule")) rules.verdict_rule = VerdictRule::parse(j["verdict_rule"].get<std::string>());
        if (j.contains("dimension_rules")) {
            for (const auto& [name, spec] : j.at("dimension_rules").items()) {
                auto dim = parse_dimension(name);
                if (!dim) throw Error(ErrorCode::InvalidArgument, "unknown dimension \"" + name + "\"");
                rules.dimension_rules[*dim] = VerdictRule::parse(spec.get<std::string>());
            }
        }
        if (j.contains("aggregate")) {
            const auto spec = j["aggregate"].get<std::string>();
            if (spec != "majority") {
                VerdictRule rule = VerdictRule::parse(spec);
                if (rule.kind != VerdictRule::Kind::FirstPresented && rule.kind != VerdictRule::Kind::SecondPresented &&
                    rule.kind != VerdictRule::Kind::Tie)
                    throw Error(ErrorCode::InvalidArgument, "aggregate rule must be majority, first_presented, "
                                                            "second_presented or tie");
                rules.aggregate_rule = rule;
            }
        }
        if (j.contains("responses")) rules.responses = j["responses"].get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed scripted rules: ") + e.what());
    } catch (const std::logic_error& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed scripted rules: ") + e.what());
    }
    return rules;
}

ScriptedRules ScriptedRules::load(const std::string& path) {
    auto j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidArgument, path + " is not a JSON object");
    return from_json(j);
}

ScriptedJudge::ScriptedJudge(ScriptedRules rules, PromptTemplates templates)
    : m_rules(std::move(rules)), m_templates(std::move(templates)), m_template_hash(m_templates.hash()) {}

const std::string* ScriptedJudge::canned(std::string_view kind, std::size_t repeat, const std::string& prompt) const {
    if (m_rules.responses.empty()) return nullptr;
    auto it = m_rules.responses.find(request_fingerprint(m_template_hash, kind, repeat, prompt));
    return it == m_rules.responses.end() ? nullptr : &it->second;
}

std::vector<NodeId> ScriptedJudge::select_parents(const Step& step, std::span<const PoolEntry> pool) {
    if (pool.empty()) throw Error(ErrorCode::InvalidArgument, "attachment pool is empty");
    if (pool.size() == 1) return {pool.front().id};
    if (const auto* reply = canned("select_parents", 0, build_parents_prompt(m_templates, step, pool, {})))
        return decode_parents_reply(*reply, pool);
    if (auto it = m_rules.parents.find(step.index); it != m_rules.parents.end()) return it->second;

    // The main branch always ends at the most recent node.
    NodeId latest = 0;
    for (const auto& e : pool)
        if (e.on_main_branch) latest = e.id;
    switch (m_rules.default_parents.kind) {
        case ParentRule::Kind::Previous: return {latest};
        case ParentRule::Kind::Root: return {pool.front().id};
        case ParentRule::Kind::AllPool: {
            std::vector<NodeId> ids;
            for (const auto& e : pool) ids.push_back(e.id);
            return ids;
        }
        case ParentRule::Kind::Random: {
            std::mt19937_64 rng(mix_seed(m_rules.default_parents.seed, step.index ^ fnv1a64(step.text)));
            if (rng() % 10 < 6) return {latest};
            const std::size_t want = 1 + rng() % std::min<std::size_t>(3, pool.size());
            std::vector<NodeId> ids;
            while (ids.size() < want) {
                const NodeId pick = pool[rng() % pool.size()].id;
                if (std::find(ids.begin(), ids.end(), pick) == ids.end()) ids.push_back(pick);
            }
            return ids;
        }
    }
    return {latest};
}

std::string ScriptedJudge::summarize_supernode(std::string_view node_text) {
    if (node_text.find_first_not_of(" \n\t\r") == std::string_view::npos)
        throw Error(ErrorCode::InvalidArgument, "cannot summarize an empty node");
    if (const auto* reply = canned("summarize", 0, build_summary_prompt(m_templates, node_text, {})))
        return decode_summary_reply(*reply, m_rules.summary_max_chars);
    if (m_rules.summary) return truncate_utf8(*m_rules.summary, m_rules.summary_max_chars);

    // first sentence, whitespace collapsed
    std::string out;
    for (std::size_t i = node_text.find_first_not_of(" \n\t\r"); i < node_text.size(); ++i) {
        const char c = node_text[i];
        const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (space) {
            if (!out.empty() && out.back() != ' ') out.push_back(' ');
        } else {
            out.push_back(c);
        }
        if ((c == '.' || c == '?' || c == '!') && (i + 1 == node_text.size() || node_text[i + 1] == ' ' ||
                                                   node_text[i + 1] == '\n'))
            break;
        if (c == '\n' && i + 1 < node_text.size() && node_text[i + 1] == '\n') break;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return truncate_utf8(out, m_rules.summary_max_chars);
}

DimensionVerdict ScriptedJudge::judge_dimension(Dimension dimension, std::string_view first, std::string_view second,
                                                const EvalContext& context) {
    if (first.find_first_not_of(" \n\t") == std::string_view::npos ||
        second.find_first_not_of(" \n\t") == std::string_view::npos)
        throw Error(ErrorCode::InvalidArgument, "abstractions must be non-empty");
    if (const auto* reply = canned(to_string(dimension), context.repeat,
                                   build_dimension_prompt(m_templates, dimension, first, second, {}))) {
        OverallVerdict v = decode_verdict_reply(*reply);
        return {dimension, v.verdict, std::move(v.rationale)};
    }
    auto it = m_rules.dimension_rules.find(dimension);
    const VerdictRule& rule = it != m_rules.dimension_rules.end() ? it->second : m_rules.verdict_rule;
    const Verdict verdict = rule.apply(first, second);
    return {dimension, verdict, "scripted rule " + rule.describe()};
}

OverallVerdict ScriptedJudge::aggregate(const std::array<DimensionVerdict, 4>& verdicts, const EvalContext& context) {
    if (const auto* reply = canned("aggregate", context.repeat, build_aggregate_prompt(m_templates, verdicts)))
        return decode_verdict_reply(*reply);
    if (!m_rules.aggregate_rule) return aggregate_majority(verdicts);
    const VerdictRule& rule = *m_rules.aggregate_rule;
    return {rule.apply("x", "x"), "scripted rule " + rule.describe()};
}

}  // namespace trace_forge
