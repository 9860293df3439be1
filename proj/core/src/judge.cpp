// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/judge.hpp"

#include "trace_forge/abstraction.hpp"
#include "trace_forge/error.hpp"
#include "trace_forge/parallel.hpp"
#include "trace_forge/util.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>

namespace trace_forge {

std::string_view to_string(Dimension d) {
    switch (d) {
        case Dimension::MacroEfficiency: return "macro_efficiency";
        case Dimension::MacroEffectiveness: return "macro_effectiveness";
        case Dimension::MicroEfficiency: return "micro_efficiency";
        case Dimension::MicroEffectiveness: return "micro_effectiveness";
    }
    return "macro_efficiency";
}

std::optional<Dimension> parse_dimension(std::string_view name) {
    for (Dimension d : kAllDimensions)
        if (to_string(d) == name) return d;
    return std::nullopt;
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::AWins: return "a_wins";
        case Verdict::BWins: return "b_wins";
        case Verdict::Tie: return "tie";
    }
    return "tie";
}

std::optional<Verdict> parse_verdict(std::string_view text) {
    std::string s;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || c == '>' || c == '<' || c == '=') s.push_back(static_cast<char>(std::tolower(u)));
    }
    if (s == "a" || s == "awins" || s == "tracea" || s == "a>b" || s == "ab" || s == "first" || s == "responsea")
        return Verdict::AWins;
    if (s == "b" || s == "bwins" || s == "traceb" || s == "b>a" || s == "ba" || s == "second" || s == "responseb")
        return Verdict::BWins;
    if (s == "tie" || s == "equal" || s == "a=b" || s == "draw" || s == "same") return Verdict::Tie;
    return std::nullopt;
}

Verdict swapped(Verdict v) {
    switch (v) {
        case Verdict::AWins: return Verdict::BWins;
        case Verdict::BWins: return Verdict::AWins;
        case Verdict::Tie: return Verdict::Tie;
    }
    return Verdict::Tie;
}

std::string_view to_string(Order o) { return o == Order::Forward ? "forward" : "reversed"; }

std::string_view to_string(FinalLabel l) {
    switch (l) {
        case FinalLabel::AWins: return "a_wins";
        case FinalLabel::BWins: return "b_wins";
        case FinalLabel::Discarded: return "discarded";
    }
    return "discarded";
}

nlohmann::json to_json(const PairJudgment& judgment) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& run : judgment.runs) {
        nlohmann::json verdicts = nlohmann::json::array();
        for (const auto& v : run.verdicts) {
            verdicts.push_back({{"dimension", std::string(to_string(v.dimension))},
                                {"verdict", std::string(to_string(v.verdict))},
                                {"rationale", v.rationale}});
        }
        runs.push_back({{"order", std::string(to_string(run.order))},
                        {"repeat", run.repeat},
                        {"verdicts", verdicts},
                        {"overall", {{"verdict", std::string(to_string(run.overall.verdict))},
                                     {"rationale", run.overall.rationale}}}});
    }
    return {{"trace_a_id", judgment.trace_a_id},
            {"trace_b_id", judgment.trace_b_id},
            {"runs", runs},
            {"final_label", std::string(to_string(judgment.final_label))},
            {"template_hash", judgment.template_hash}};
}

OverallVerdict aggregate_majority(const std::array<DimensionVerdict, 4>& verdicts) {
    int a = 0;
    int b = 0;
    for (const auto& v : verdicts) {
        if (v.verdict == Verdict::AWins) ++a;
        if (v.verdict == Verdict::BWins) ++b;
    }
    const std::string tally = "majority " + std::to_string(a) + "-" + std::to_string(b);
    if (a > b) return {Verdict::AWins, tally};
    if (b > a) return {Verdict::BWins, tally};
    return {Verdict::Tie, tally};
}

FinalLabel tally_final_label(const std::vector<RunRecord>& runs) {
    if (runs.empty()) return FinalLabel::Discarded;
    for (Verdict candidate : {Verdict::AWins, Verdict::BWins}) {
        std::size_t total = 0;
        std::array<std::size_t, 2> per_order{};
        std::array<std::size_t, 2> runs_per_order{};
        for (const auto& run : runs) {
            const auto o = static_cast<std::size_t>(run.order);
            ++runs_per_order[o];
            if (run.overall.verdict == candidate) {
                ++total;
                ++per_order[o];
            }
        }
        bool consistent = 2 * total > runs.size();
        for (std::size_t o = 0; o < 2; ++o)
            if (runs_per_order[o] > 0 && 2 * per_order[o] <= runs_per_order[o]) consistent = false;
        if (consistent) return candidate == Verdict::AWins ? FinalLabel::AWins : FinalLabel::BWins;
    }
    return FinalLabel::Discarded;
}

PairJudgment robust_compare(Judge& judge, const EvaluationSide& a, const EvaluationSide& b,
                            const RobustCompareOptions& options) {
    if (options.repeats < 1) throw Error(ErrorCode::InvalidArgument, "repeats must be at least 1");
    for (const EvaluationSide* side : {&a, &b}) {
        if (side->macro.find_first_not_of(" \n\t") == std::string::npos ||
            side->micro.find_first_not_of(" \n\t") == std::string::npos)
            throw Error(ErrorCode::InvalidArgument, "trace " + side->trace_id + " has an empty abstraction");
    }

    PairJudgment judgment;
    judgment.trace_a_id = a.trace_id;
    judgment.trace_b_id = b.trace_id;
    judgment.template_hash = judge.template_hash();
    judgment.runs.resize(2 * options.repeats);

    parallel_for(judgment.runs.size(), options.concurrency, [&](std::size_t i) {
        RunRecord& run = judgment.runs[i];
        run.order = i < options.repeats ? Order::Forward : Order::Reversed;
        run.repeat = i % options.repeats;
        const bool reversed = run.order == Order::Reversed;
        const EvaluationSide& first = reversed ? b : a;
        const EvaluationSide& second = reversed ? a : b;
        const EvalContext context{run.order, run.repeat};

        std::array<DimensionVerdict, 4> presented;
        for (std::size_t d = 0; d < kAllDimensions.size(); ++d) {
            const Dimension dim = kAllDimensions[d];
            presented[d] = is_macro(dim) ? judge.judge_dimension(dim, first.macro, second.macro, context)
                                         : judge.judge_dimension(dim, first.micro, second.micro, context);
            presented[d].dimension = dim;
        }
        OverallVerdict overall = judge.aggregate(presented, context);
        for (std::size_t d = 0; d < presented.size(); ++d) {
            run.verdicts[d] = presented[d];
            if (reversed) run.verdicts[d].verdict = swapped(presented[d].verdict);
        }
        run.overall = overall;
        if (reversed) run.overall.verdict = swapped(overall.verdict);
    });

    judgment.final_label = tally_final_label(judgment.runs);
    return judgment;
}

namespace {

std::optional<nlohmann::json> parse_object(std::string_view text) {
    auto parsed = nlohmann::json::parse(text.begin(), text.end(), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
    return parsed;
}

// End of the balanced object starting at `open`, honoring string literals.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return i + 1;
    }
    return std::nullopt;
}

}  // namespace

std::optional<nlohmann::json> extract_json_object(std::string_view reply) {
    for (std::size_t fence = reply.find("```"); fence != std::string_view::npos;) {
        std::size_t body = reply.find('\n', fence);
        if (body == std::string_view::npos) break;
        std::size_t close = reply.find("```", body);
        if (close == std::string_view::npos) break;
        if (auto obj = parse_object(reply.substr(body + 1, close - body - 1))) return obj;
        fence = reply.find("```", close + 3);
    }
    for (std::size_t open = reply.find('{'); open != std::string_view::npos; open = reply.find('{', open + 1)) {
        if (auto end = balanced_end(reply, open)) {
            if (auto obj = parse_object(reply.substr(open, *end - open))) return obj;
        }
    }
    return std::nullopt;
}

std::string_view template_file_stem(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::System: return "system";
        case TemplateKind::SelectParents: return "select_parents";
        case TemplateKind::Summarize: return "summarize";
        case TemplateKind::MacroEfficiency: return "macro_efficiency";
        case TemplateKind::MacroEffectiveness: return "macro_effectiveness";
        case TemplateKind::MicroEfficiency: return "micro_efficiency";
        case TemplateKind::MicroEffectiveness: return "micro_effectiveness";
        case TemplateKind::Aggregate: return "aggregate";
        case TemplateKind::Reask: return "reask";
    }
    return "system";
}

TemplateKind template_for(Dimension d) {
    switch (d) {
        case Dimension::MacroEfficiency: return TemplateKind::MacroEfficiency;
        case Dimension::MacroEffectiveness: return TemplateKind::MacroEffectiveness;
        case Dimension::MicroEfficiency: return TemplateKind::MicroEfficiency;
        case Dimension::MicroEffectiveness: return TemplateKind::MicroEffectiveness;
    }
    return TemplateKind::MacroEfficiency;
}

// Defined in the generated default_templates.cpp.
std::string_view builtin_template(TemplateKind kind);

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    for (TemplateKind kind : kAllTemplateKinds) t.m_texts[kind] = std::string(builtin_template(kind));
    return t;
}

PromptTemplates PromptTemplates::load(const std::string& dir) {
    PromptTemplates t = defaults();
    for (TemplateKind kind : kAllTemplateKinds) {
        const auto path = std::filesystem::path(dir) / (std::string(template_file_stem(kind)) + ".txt");
        if (std::filesystem::exists(path)) t.m_texts[kind] = normalize_newlines(read_file(path.string()));
    }
    return t;
}

const std::string& PromptTemplates::get(TemplateKind kind) const { return m_texts.at(kind); }

void PromptTemplates::set(TemplateKind kind, std::string text) { m_texts[kind] = std::move(text); }

std::string PromptTemplates::hash() const {
    std::uint64_t h = fnv1a64("");
    for (TemplateKind kind : kAllTemplateKinds) {
        h = fnv1a64(template_file_stem(kind), h);
        h = fnv1a64(std::string_view("\0", 1), h);
        h = fnv1a64(m_texts.at(kind), h);
        h = fnv1a64(std::string_view("\0", 1), h);
    }
    return to_hex(h);
}

std::string PromptTemplates::render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const std::size_t close = tmpl.find('}', i);
            if (close != std::string_view::npos) {
                auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

std::string format_pool(std::span<const PoolEntry> pool, std::size_t max_chars_per_node) {
    std::string out;
    for (const auto& entry : pool) {
        out += "[" + std::to_string(entry.id) + "] (" + (entry.on_main_branch ? "main branch" : "branch endpoint") + ")\n";
        out += clip_for_judge(entry.text, max_chars_per_node);
        out += "\n\n";
    }
    return out;
}

}  // namespace trace_forge
