// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/abstraction.hpp"

#include "trace_forge/error.hpp"
#include "trace_forge/util.hpp"

#include <algorithm>
#include <regex>
#include <set>

namespace trace_forge {

std::string MacroAbstraction::text() const {
    std::string out;
    for (const auto& line : lines) {
        out += line.header;
        out += ' ';
        out += line.summary;
        out += '\n';
    }
    return out;
}

std::map<NodeId, std::size_t> longest_path_depths(const ReasoningDag& dag) {
    // ids are a topological order, so one ascending sweep suffices
    std::map<NodeId, std::size_t> depth;
    for (const auto& n : dag.nodes) depth[n.id] = 0;
    for (const auto& [from, to] : dag.edges) depth[to] = std::max(depth[to], depth[from] + 1);
    return depth;
}

MacroAbstraction linearize_macro(const ReasoningDag& dag, const std::map<NodeId, std::string>& summaries) {
    MacroAbstraction macro;
    macro.source_dag_id = dag.trace_id;
    const auto depth = longest_path_depths(dag);
    for (const auto& n : dag.nodes) {
        auto it = summaries.find(n.id);
        if (it == summaries.end()) throw Error(ErrorCode::MissingSummary, "no summary for node " + std::to_string(n.id));
        std::string parents;
        for (NodeId p : dag.parents(n.id)) {
            if (!parents.empty()) parents += ',';
            parents += std::to_string(p);
        }
        if (parents.empty()) parents = "-";
        std::string header = "[node " + std::to_string(n.id) + " | depth " + std::to_string(depth.at(n.id)) + " | ";
        const std::string roles = role_string(n.roles);
        header += roles.empty() ? "linear" : roles;
        header += " | parents: " + parents + "]";
        macro.lines.push_back({std::move(header), it->second});
    }
    return macro;
}

AnswerLocator default_answer_locator(std::string final_answer) {
    static const std::regex boxed(R"(\\boxed\s*\{)");
    return [answer = std::move(final_answer)](std::string_view text) {
        if (std::regex_search(text.begin(), text.end(), boxed)) return true;
        return !answer.empty() && text.find(answer) != std::string_view::npos;
    };
}

MicroAbstraction dominant_path(const ReasoningDag& dag, const AnswerLocator& locator) {
    MicroAbstraction micro;
    if (dag.nodes.empty()) return micro;

    std::vector<NodeId> seeds;
    for (const auto& n : dag.nodes)
        if (dag.out_degree(n.id) == 0 && locator(n.text)) seeds.push_back(n.id);
    if (seeds.empty()) {
        for (auto it = dag.nodes.rbegin(); it != dag.nodes.rend(); ++it) {
            if (dag.out_degree(it->id) == 0) {
                seeds.push_back(it->id);
                break;
            }
        }
    }

    std::set<NodeId> keep(seeds.begin(), seeds.end());
    std::vector<NodeId> frontier = seeds;
    while (!frontier.empty()) {
        const NodeId cur = frontier.back();
        frontier.pop_back();
        for (NodeId p : dag.parents(cur))
            if (keep.insert(p).second) frontier.push_back(p);
    }
    for (const auto& n : dag.nodes) {
        if (!keep.count(n.id)) continue;
        if (!micro.text.empty()) micro.text += kBlockJoiner;
        micro.text += n.text;
        micro.node_ids.push_back(n.id);
    }
    return micro;
}

std::string clip_for_judge(std::string_view text, std::size_t max_chars) {
    if (text.size() <= max_chars) return std::string(text);
    static constexpr std::string_view marker = "\n[... truncated ...]";
    const std::size_t keep = max_chars > marker.size() ? max_chars - marker.size() : 0;
    return truncate_utf8(text, keep) + std::string(marker);
}

}  // namespace trace_forge
