// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "trace_forge/dag.hpp"

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace trace_forge {

/// Bumped whenever the header grammar below changes; evaluation prompts
/// depend on it.
inline constexpr int kMacroHeaderVersion = 1;

struct MacroLine {
    std::string header;  // "[node 3 | depth 2 | merging | parents: 1,2]"
    std::string summary;
};

struct MacroAbstraction {
    std::string source_dag_id;
    std::vector<MacroLine> lines;

    /// One "header summary" line per super-node, newline separated.
    std::string text() const;
};

struct MicroAbstraction {
    std::vector<NodeId> node_ids;  // emission order
    std::string text;
};

/// Longest-path depth from the root for every node.
std::map<NodeId, std::size_t> longest_path_depths(const ReasoningDag& dag);

MacroAbstraction linearize_macro(const ReasoningDag& dag, const std::map<NodeId, std::string>& summaries);

using AnswerLocator = std::function<bool(std::string_view node_text)>;

/// Matches a \boxed{...} marker, or the literal final answer when non-empty.
AnswerLocator default_answer_locator(std::string final_answer = {});

/// Answer-bearing terminal nodes plus all their ancestors, in emission
/// order. Falls back to the newest terminal node when nothing matches.
MicroAbstraction dominant_path(const ReasoningDag& dag, const AnswerLocator& locator);

/// Clip an abstraction to a judge context budget, marking the cut.
std::string clip_for_judge(std::string_view text, std::size_t max_chars);

}  // namespace trace_forge
