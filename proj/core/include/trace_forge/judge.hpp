// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "trace_forge/dag.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace trace_forge {

enum class Dimension { MacroEfficiency, MacroEffectiveness, MicroEfficiency, MicroEffectiveness };

inline constexpr std::array<Dimension, 4> kAllDimensions = {
    Dimension::MacroEfficiency, Dimension::MacroEffectiveness, Dimension::MicroEfficiency,
    Dimension::MicroEffectiveness};

std::string_view to_string(Dimension d);
std::optional<Dimension> parse_dimension(std::string_view name);
inline bool is_macro(Dimension d) { return d == Dimension::MacroEfficiency || d == Dimension::MacroEffectiveness; }

/// Verdicts are always relative to presentation: AWins means the first
/// abstraction shown to the judge won.
enum class Verdict { AWins, BWins, Tie };

std::string_view to_string(Verdict v);
/// Lenient: accepts "a_wins", "A", "trace a", "a>b", "tie", "equal", ...
std::optional<Verdict> parse_verdict(std::string_view text);
Verdict swapped(Verdict v);

struct DimensionVerdict {
    Dimension dimension = Dimension::MacroEfficiency;
    Verdict verdict = Verdict::Tie;
    std::string rationale;
};

struct OverallVerdict {
    Verdict verdict = Verdict::Tie;
    std::string rationale;
};

enum class Order { Forward, Reversed };
std::string_view to_string(Order o);

struct RunRecord {
    Order order = Order::Forward;
    std::size_t repeat = 0;
    std::array<DimensionVerdict, 4> verdicts;  // un-swapped: a/b refer to the pair, not presentation
    OverallVerdict overall;
};

enum class FinalLabel { AWins, BWins, Discarded };
std::string_view to_string(FinalLabel l);

struct PairJudgment {
    std::string trace_a_id;
    std::string trace_b_id;
    std::vector<RunRecord> runs;  // forward runs first, then reversed, by repeat
    FinalLabel final_label = FinalLabel::Discarded;
    std::string template_hash;
};

nlohmann::json to_json(const PairJudgment& judgment);

/// Request context passed with every pairwise call so judges can vary
/// sampling across repetitions and fingerprint requests.
struct EvalContext {
    Order order = Order::Forward;
    std::size_t repeat = 0;
};

/// The full judging contract: parent selection (via ParentSelector),
/// super-node summaries, per-dimension verdicts and aggregation.
/// Implementations must be safe to call concurrently.
class Judge : public ParentSelector {
public:
    /// Throws Error{InvalidArgument} on whitespace-only input before any dispatch.
    virtual std::string summarize_supernode(std::string_view node_text) = 0;

    virtual DimensionVerdict judge_dimension(Dimension dimension, std::string_view first, std::string_view second,
                                             const EvalContext& context) = 0;

    virtual OverallVerdict aggregate(const std::array<DimensionVerdict, 4>& verdicts, const EvalContext& context) = 0;

    /// Identifies the prompt protocol version behind this judge.
    virtual std::string template_hash() const = 0;
};

/// Offline aggregation: majority over non-tie verdicts; an even split is a tie.
OverallVerdict aggregate_majority(const std::array<DimensionVerdict, 4>& verdicts);

/// Label from a full set of runs: X wins iff X is a strict majority of all
/// overall verdicts, a strict majority within each order, and not a tie.
FinalLabel tally_final_label(const std::vector<RunRecord>& runs);

/// Both abstractions of one trace, ready for pairwise evaluation.
struct EvaluationSide {
    std::string trace_id;
    std::string macro;
    std::string micro;
};

struct RobustCompareOptions {
    std::size_t repeats = 3;
    std::size_t concurrency = 1;
};

/// Runs the hierarchical evaluation `repeats` times per presentation order,
/// un-swaps the reversed runs and tallies a consistent label.
PairJudgment robust_compare(Judge& judge, const EvaluationSide& a, const EvaluationSide& b,
                            const RobustCompareOptions& options = {});

// -- structured output ------------------------------------------------------

/// Locate the JSON object in a judge reply: a ```json fence if present,
/// otherwise the first balanced {...} that parses. Surrounding prose is ignored.
std::optional<nlohmann::json> extract_json_object(std::string_view reply);

// -- prompt templates -------------------------------------------------------

enum class TemplateKind {
    System,
    SelectParents,
    Summarize,
    MacroEfficiency,
    MacroEffectiveness,
    MicroEfficiency,
    MicroEffectiveness,
    Aggregate,
    Reask,
};

inline constexpr std::array<TemplateKind, 9> kAllTemplateKinds = {
    TemplateKind::System,          TemplateKind::SelectParents,      TemplateKind::Summarize,
    TemplateKind::MacroEfficiency, TemplateKind::MacroEffectiveness, TemplateKind::MicroEfficiency,
    TemplateKind::MicroEffectiveness, TemplateKind::Aggregate,       TemplateKind::Reask};

/// File stem used when templates live on disk, e.g. "macro_efficiency" -> macro_efficiency.txt.
std::string_view template_file_stem(TemplateKind kind);
TemplateKind template_for(Dimension d);

class PromptTemplates {
public:
    static PromptTemplates defaults();
    /// Loads <dir>/<stem>.txt for every kind; missing files keep the default.
    static PromptTemplates load(const std::string& dir);

    const std::string& get(TemplateKind kind) const;
    void set(TemplateKind kind, std::string text);

    /// Hash over every template, in kind order. Part of each request fingerprint.
    std::string hash() const;

    /// Replace {name} placeholders present in `values`; other braces are untouched.
    static std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

private:
    std::map<TemplateKind, std::string> m_texts;
};

/// Presentation of an attachment pool inside the parent-selection prompt.
std::string format_pool(std::span<const PoolEntry> pool, std::size_t max_chars_per_node = 600);

}  // namespace trace_forge
