// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/trace.hpp"

#include "trace_forge/error.hpp"
#include "trace_forge/util.hpp"

#include <algorithm>
#include <sstream>

namespace trace_forge {

std::string_view to_string(ModelFamily family) {
    switch (family) {
        case ModelFamily::Qwen3: return "qwen3";
        case ModelFamily::DeepseekDistill: return "deepseek_distill";
        case ModelFamily::GptOss: return "gpt_oss";
        case ModelFamily::Other: return "other";
    }
    return "other";
}

ModelFamily parse_model_family(std::string_view name) {
    if (name == "qwen3") return ModelFamily::Qwen3;
    if (name == "deepseek_distill") return ModelFamily::DeepseekDistill;
    if (name == "gpt_oss") return ModelFamily::GptOss;
    return ModelFamily::Other;
}

PrefixStats& PrefixStats::merge(const PrefixStats& other) {
    for (const auto& [token, count] : other.counts) counts[token] += count;
    total_blocks += other.total_blocks;
    return *this;
}

namespace {

bool is_trim_space(char c) { return c == ' ' || c == '\n'; }

bool is_ascii_alnum(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_word_byte(unsigned char c) { return is_ascii_alnum(c) || c >= 0x80; }

// U+2000..U+206F (general punctuation: curly quotes, dashes, bullets) encodes
// as E2 80..81 xx.
std::size_t utf8_punct_len(std::string_view s, std::size_t i) {
    if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2) {
        const auto b1 = static_cast<unsigned char>(s[i + 1]);
        if (b1 == 0x80 || b1 == 0x81) return 3;
    }
    return 0;
}

// Tracks whether we are inside a fenced code block or display math region
// while walking consecutive blocks.
class RegionTracker {
public:
    bool inside() const noexcept { return m_code || m_math; }

    void consume(std::string_view block) {
        std::size_t pos = 0;
        while (pos <= block.size()) {
            std::size_t eol = block.find('\n', pos);
            if (eol == std::string_view::npos) eol = block.size();
            consume_line(block.substr(pos, eol - pos));
            pos = eol + 1;
        }
    }

private:
    void consume_line(std::string_view line) {
        std::size_t first = line.find_first_not_of(" \t");
        if (first != std::string_view::npos) {
            std::string_view body = line.substr(first);
            if (body.starts_with("```") || body.starts_with("~~~")) {
                m_code = !m_code;
                return;
            }
        }
        if (m_code) return;
        for (std::size_t i = 0; i + 1 < line.size(); ++i) {
            if (line[i] == '$' && line[i + 1] == '$') {
                m_math = !m_math;
                ++i;
            } else if (line[i] == '\\' && line[i + 1] == '[') {
                m_math = true;
                ++i;
            } else if (line[i] == '\\' && line[i + 1] == ']') {
                m_math = false;
                ++i;
            }
        }
    }

    bool m_code = false;
    bool m_math = false;
};

}  // namespace

std::vector<RawBlock> partition_coarse(std::string_view text) {
    std::vector<RawBlock> blocks;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t delim = text.find(kBlockJoiner, pos);
        const std::size_t stop = delim == std::string_view::npos ? text.size() : delim;
        std::size_t b = pos;
        std::size_t e = stop;
        while (b < e && is_trim_space(text[b])) ++b;
        while (e > b && is_trim_space(text[e - 1])) --e;
        if (b < e) blocks.push_back({std::string(text.substr(b, e - b)), {b, e}});
        if (delim == std::string_view::npos) break;
        pos = delim + kBlockJoiner.size();
    }
    return blocks;
}

std::string leading_token(std::string_view s) {
    std::size_t i = 0;
    for (;;) {
        while (i < s.size()) {
            const auto c = static_cast<unsigned char>(s[i]);
            if (is_word_byte(c)) {
                if (std::size_t n = utf8_punct_len(s, i)) {
                    i += n;
                    continue;
                }
                break;
            }
            ++i;
        }
        // list numerals: "1." "12)" followed by whitespace
        std::size_t j = i;
        while (j < s.size() && s[j] >= '0' && s[j] <= '9') ++j;
        if (j > i && j + 1 < s.size() && (s[j] == '.' || s[j] == ')') &&
            (s[j + 1] == ' ' || s[j + 1] == '\t')) {
            i = j + 1;
            continue;
        }
        break;
    }
    std::string token;
    while (i < s.size() && is_word_byte(static_cast<unsigned char>(s[i])) && utf8_punct_len(s, i) == 0) {
        char c = s[i++];
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        token.push_back(c);
    }
    return token;
}

PrefixStats compute_prefix_stats(std::span<const ReasoningTrace> corpus) {
    PrefixStats stats;
    for (const auto& trace : corpus) {
        PrefixStats local;
        for (const auto& block : partition_coarse(trace.text)) {
            ++local.total_blocks;
            std::string token = leading_token(block.text);
            if (!token.empty()) ++local.counts[token];
        }
        stats.merge(local);
    }
    if (stats.total_blocks == 0) throw Error(ErrorCode::EmptyCorpus, "corpus contains no blocks");
    return stats;
}

std::vector<Step> refine_partition(std::span<const RawBlock> blocks, const KeywordSet& keywords) {
    std::vector<Step> steps;
    RegionTracker region;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const RawBlock& block = blocks[b];
        const bool opens = b == 0 || (!region.inside() && keywords.contains(leading_token(block.text)));
        if (opens) {
            steps.push_back({steps.size(), block.text, block.span});
        } else {
            Step& current = steps.back();
            current.text += kBlockJoiner;
            current.text += block.text;
            current.span.end = block.span.end;
        }
        region.consume(block.text);
    }
    return steps;
}

std::vector<Step> partition_trace(std::string_view trace_text, const KeywordSet& keywords) {
    const auto blocks = partition_coarse(trace_text);
    return refine_partition(blocks, keywords);
}

KeywordSet default_keywords(ModelFamily family) {
    return {family, {"so", "but", "therefore", "need", "wait", "alternatively", "now", "okay", "hmm", "let"}};
}

KeywordSet parse_keyword_config(std::string_view text, ModelFamily family) {
    KeywordSet set{family, {}};
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::string token = leading_token(line);
        if (!token.empty()) set.keywords.insert(std::move(token));
    }
    return set;
}

KeywordSet load_keyword_file(const std::string& path, ModelFamily family) {
    return parse_keyword_config(read_file(path), family);
}

std::string prefix_stats_csv(const PrefixStats& stats) {
    std::vector<std::pair<std::string, std::size_t>> rows(stats.counts.begin(), stats.counts.end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::string out = "token,count,fraction\n";
    for (const auto& [token, count] : rows) {
        const double fraction =
            stats.total_blocks == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(stats.total_blocks);
        out += token + "," + std::to_string(count) + "," + format_double(fraction) + "\n";
    }
    return out;
}

ReasoningTrace trace_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("id") || !j.contains("text"))
        throw Error(ErrorCode::InvalidArgument, "trace record needs \"id\" and \"text\"");
    ReasoningTrace t;
    t.id = j.at("id").get<std::string>();
    t.prompt_id = j.value("prompt_id", std::string{});
    t.prompt = normalize_newlines(j.value("prompt", std::string{}));
    t.model_family = parse_model_family(j.value("model_family", std::string{"other"}));
    t.text = normalize_newlines(j.at("text").get<std::string>());
    t.final_answer = j.value("final_answer", std::string{});
    t.verified_correct = j.value("verified_correct", false);
    return t;
}

nlohmann::json trace_to_json(const ReasoningTrace& t) {
    nlohmann::json j = {{"id", t.id},
                        {"prompt_id", t.prompt_id},
                        {"model_family", std::string(to_string(t.model_family))},
                        {"text", t.text},
                        {"final_answer", t.final_answer},
                        {"verified_correct", t.verified_correct}};
    if (!t.prompt.empty()) j["prompt"] = t.prompt;
    return j;
}

std::vector<ReasoningTrace> parse_traces_jsonl(std::string_view contents) {
    std::vector<ReasoningTrace> traces;
    std::istringstream in{std::string(contents)};
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            traces.push_back(trace_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidArgument, "trace JSONL line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return traces;
}

std::vector<ReasoningTrace> load_traces_jsonl(const std::string& path) {
    return parse_traces_jsonl(read_file(path));
}

std::string traces_to_jsonl(std::span<const ReasoningTrace> traces) {
    std::string out;
    for (const auto& t : traces) out += trace_to_json(t).dump() + "\n";
    return out;
}

nlohmann::json steps_to_json(std::span<const Step> steps) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : steps) {
        arr.push_back({{"index", s.index}, {"text", s.text}, {"span", {s.span.begin, s.span.end}}});
    }
    return arr;
}

}  // namespace trace_forge
