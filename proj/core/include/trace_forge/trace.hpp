// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace trace_forge {

enum class ModelFamily { Qwen3, DeepseekDistill, GptOss, Other };

std::string_view to_string(ModelFamily family);
/// Accepts the JSONL spellings ("qwen3", "deepseek_distill", "gpt_oss", "other").
/// Unknown names map to Other.
ModelFamily parse_model_family(std::string_view name);

/// A generated reasoning trace. `text` holds only the deliberation content
/// that precedes the reasoning-termination marker, with LF line endings.
struct ReasoningTrace {
    std::string id;
    std::string prompt_id;
    std::string prompt;  // question text; optional, records fall back to prompt_id
    ModelFamily model_family = ModelFamily::Other;
    std::string text;
    std::string final_answer;
    bool verified_correct = false;
};

/// Half-open byte range [begin, end) into a trace text.
struct CharSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct RawBlock {
    std::string text;
    CharSpan span;
};

struct Step {
    std::size_t index = 0;
    std::string text;
    CharSpan span;
};

struct PrefixStats {
    std::map<std::string, std::size_t> counts;
    std::size_t total_blocks = 0;

    /// Associative, commutative merge; lets corpus shards be tallied
    /// independently and combined in any order.
    PrefixStats& merge(const PrefixStats& other);
};

struct KeywordSet {
    ModelFamily model_family = ModelFamily::Other;
    std::set<std::string> keywords;

    bool contains(std::string_view token) const { return keywords.count(std::string(token)) != 0; }
};

/// Joiner placed between blocks merged into one step.
inline constexpr std::string_view kBlockJoiner = "\n\n";

/// Split on the two-newline delimiter. Blocks are trimmed of surrounding
/// spaces and newlines (tabs are content); empty blocks are dropped. Spans
/// index into `trace_text`.
std::vector<RawBlock> partition_coarse(std::string_view trace_text);

/// First word of a block, lowercased, after stripping Markdown decoration
/// (bullets, headings, emphasis, list numerals) and punctuation. Empty if the
/// block has no word characters.
std::string leading_token(std::string_view block_text);

PrefixStats compute_prefix_stats(std::span<const ReasoningTrace> corpus);

/// Merge coarse blocks into steps: a block opens a new step iff its leading
/// token is a keyword and it does not start inside a fenced code or display
/// math region. Block 0 always opens step 0.
std::vector<Step> refine_partition(std::span<const RawBlock> blocks, const KeywordSet& keywords);

/// partition_coarse followed by refine_partition.
std::vector<Step> partition_trace(std::string_view trace_text, const KeywordSet& keywords);

/// Built-in keyword set for a family. Every family currently shares the same
/// ten discourse markers; curated sets are loaded from config files.
KeywordSet default_keywords(ModelFamily family);

/// Plain-text keyword config: one token per line, '#' comments, blank lines
/// ignored. Tokens are lowercased.
KeywordSet parse_keyword_config(std::string_view text, ModelFamily family);
KeywordSet load_keyword_file(const std::string& path, ModelFamily family);

/// CSV with header "token,count,fraction", rows sorted by descending count
/// then token. fraction = count / total_blocks.
std::string prefix_stats_csv(const PrefixStats& stats);

// JSONL surface. Text is newline-normalized on read.
ReasoningTrace trace_from_json(const nlohmann::json& j);
nlohmann::json trace_to_json(const ReasoningTrace& trace);
std::vector<ReasoningTrace> parse_traces_jsonl(std::string_view contents);
std::vector<ReasoningTrace> load_traces_jsonl(const std::string& path);
std::string traces_to_jsonl(std::span<const ReasoningTrace> traces);

nlohmann::json steps_to_json(std::span<const Step> steps);

}  // namespace trace_forge
