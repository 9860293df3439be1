// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "trace_forge/judge.hpp"

#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace trace_forge {

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::string fingerprint;  // stable id of the logical request, for audit/replay
    std::size_t attempt = 0;  // parse attempt within the logical request
};

/// Transport behind an LLM judge. Implementations throw
/// Error{JudgeUnavailable} when no usable reply can be obtained.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
};

/// Thread-safe record of every raw exchange with a judge. When a path is
/// given each record is also appended to it as one JSON line immediately.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(std::string path);

    void record(nlohmann::json entry);
    std::vector<nlohmann::json> entries() const;

private:
    std::optional<std::string> m_path;
    mutable std::mutex m_mutex;
    std::vector<nlohmann::json> m_entries;
};

struct RetryPolicy {
    std::size_t max_retries = 4;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds max_backoff{8000};
    double multiplier = 2.0;

    /// Delay before retry number `retry` (0-based), capped at max_backoff.
    std::chrono::milliseconds backoff(std::size_t retry) const;
};

struct HttpJudgeConfig {
    std::string base_url;  // e.g. https://api.example.com/v1
    std::string model;
    std::string api_key_env = "TRACE_FORGE_JUDGE_KEY";
    std::size_t max_in_flight = 4;
    RetryPolicy retry;
    std::chrono::seconds timeout{120};
};

/// OpenAI-compatible chat completions client:
/// POST {base_url}/chat/completions, reply read from choices[0].message.content.
/// 429, 5xx and transport failures are retried with exponential backoff.
class HttpChatBackend final : public ChatBackend {
public:
    HttpChatBackend(HttpJudgeConfig config, std::shared_ptr<AuditLog> audit);

    std::string complete(const ChatRequest& request) override;

private:
    HttpJudgeConfig m_config;
    std::shared_ptr<AuditLog> m_audit;
    std::string m_api_key;
    std::string m_origin;  // scheme://host[:port]
    std::string m_path;    // path prefix + /chat/completions
    std::counting_semaphore<> m_in_flight;
};

/// Client for a scalar reward-model endpoint: POST {url} with {"trace": ...},
/// reply {"score": <number>}. Same retry rules as HttpChatBackend.
class HttpScorer {
public:
    HttpScorer(std::string url, RetryPolicy retry = {}, std::chrono::seconds timeout = std::chrono::seconds{60});

    double score(const std::string& trace) const;

private:
    std::string m_origin;
    std::string m_path;
    RetryPolicy m_retry;
    std::chrono::seconds m_timeout;
};

enum class AggregationMode { Llm, Majority };

struct LlmJudgeOptions {
    std::size_t parse_retries = 3;
    double structural_temperature = 0.0;  // parent selection and summaries
    double pairwise_temperature = 0.7;    // dimension verdicts and aggregation
    std::size_t summary_max_chars = 240;
    std::size_t pool_node_chars = 600;
    std::size_t abstraction_max_chars = 24000;
    AggregationMode aggregation = AggregationMode::Llm;
};

// Prompt construction shared by every judge that speaks the template protocol,
// so canned replies recorded from one judge replay under another.
std::string build_parents_prompt(const PromptTemplates& templates, const Step& step, std::span<const PoolEntry> pool,
                                 const LlmJudgeOptions& options);
std::string build_summary_prompt(const PromptTemplates& templates, std::string_view node_text,
                                 const LlmJudgeOptions& options);
std::string build_dimension_prompt(const PromptTemplates& templates, Dimension dimension, std::string_view first,
                                   std::string_view second, const LlmJudgeOptions& options);
std::string build_aggregate_prompt(const PromptTemplates& templates, const std::array<DimensionVerdict, 4>& verdicts);

/// Stable fingerprint of one logical judge request.
std::string request_fingerprint(std::string_view template_hash, std::string_view kind, std::size_t repeat,
                                std::string_view prompt);

/// Judge that renders prompt templates, sends them through a ChatBackend and
/// parses the fenced-JSON replies, re-asking up to parse_retries times.
class LlmJudge final : public Judge {
public:
    LlmJudge(std::shared_ptr<ChatBackend> backend, PromptTemplates templates, LlmJudgeOptions options = {});

    std::vector<NodeId> select_parents(const Step& step, std::span<const PoolEntry> pool) override;
    std::string summarize_supernode(std::string_view node_text) override;
    DimensionVerdict judge_dimension(Dimension dimension, std::string_view first, std::string_view second,
                                     const EvalContext& context) override;
    OverallVerdict aggregate(const std::array<DimensionVerdict, 4>& verdicts, const EvalContext& context) override;
    std::string template_hash() const override { return m_template_hash; }

private:
    template <typename Parse>
    auto ask(std::string_view kind, std::size_t repeat, const std::string& prompt, double temperature, Parse&& parse);

    std::shared_ptr<ChatBackend> m_backend;
    PromptTemplates m_templates;
    LlmJudgeOptions m_options;
    std::string m_template_hash;
};

// Reply decoders shared by every judge implementation. Each throws
// Error{ParseFailure} (or OutOfPool for parents) with a reason suitable for a re-ask.
std::vector<NodeId> decode_parents_reply(std::string_view reply, std::span<const PoolEntry> pool);
std::string decode_summary_reply(std::string_view reply, std::size_t max_chars);
OverallVerdict decode_verdict_reply(std::string_view reply);

}  // namespace trace_forge
