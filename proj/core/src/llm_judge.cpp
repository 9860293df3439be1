// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/llm_judge.hpp"

#include "trace_forge/abstraction.hpp"
#include "trace_forge/error.hpp"
#include "trace_forge/log.hpp"
#include "trace_forge/util.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace trace_forge {

AuditLog::AuditLog(std::string path) : m_path(std::move(path)) {}

void AuditLog::record(nlohmann::json entry) {
    std::lock_guard lock(m_mutex);
    if (m_path) {
        std::ofstream out(*m_path, std::ios::app | std::ios::binary);
        if (!out) throw Error(ErrorCode::Io, "cannot append audit log " + *m_path);
        out << entry.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    }
    m_entries.push_back(std::move(entry));
}

std::vector<nlohmann::json> AuditLog::entries() const {
    std::lock_guard lock(m_mutex);
    return m_entries;
}

std::chrono::milliseconds RetryPolicy::backoff(std::size_t retry) const {
    const double scaled = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, static_cast<double>(retry));
    const double capped = std::min(scaled, static_cast<double>(max_backoff.count()));
    return std::chrono::milliseconds(static_cast<std::chrono::milliseconds::rep>(capped));
}

namespace {

std::ptrdiff_t checked_in_flight(std::size_t n) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "max in-flight requests must be at least 1");
    return static_cast<std::ptrdiff_t>(n);
}

class SemaphoreGuard {
public:
    explicit SemaphoreGuard(std::counting_semaphore<>& sem) : m_sem(sem) { m_sem.acquire(); }
    ~SemaphoreGuard() { m_sem.release(); }
    SemaphoreGuard(const SemaphoreGuard&) = delete;
    SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

private:
    std::counting_semaphore<>& m_sem;
};

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

HttpChatBackend::HttpChatBackend(HttpJudgeConfig config, std::shared_ptr<AuditLog> audit)
    : m_config(std::move(config)),
      m_audit(audit ? std::move(audit) : std::make_shared<AuditLog>()),
      m_in_flight(checked_in_flight(m_config.max_in_flight)) {
    const auto scheme_end = m_config.base_url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorCode::InvalidArgument, "judge URL needs a scheme: " + m_config.base_url);
    const auto path_begin = m_config.base_url.find('/', scheme_end + 3);
    m_origin = m_config.base_url.substr(0, path_begin);
    std::string prefix = path_begin == std::string::npos ? "" : m_config.base_url.substr(path_begin);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    m_path = prefix + "/chat/completions";
    if (const char* key = std::getenv(m_config.api_key_env.c_str())) m_api_key = key;
}

std::string HttpChatBackend::complete(const ChatRequest& request) {
    SemaphoreGuard slot(m_in_flight);

    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    const nlohmann::json body = {{"model", m_config.model}, {"messages", messages}, {"temperature", request.temperature}};
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!m_api_key.empty()) headers.emplace("Authorization", "Bearer " + m_api_key);

    std::string last_error;
    for (std::size_t retry = 0; retry <= m_config.retry.max_retries; ++retry) {
        httplib::Client client(m_origin);
        client.set_connection_timeout(m_config.timeout);
        client.set_read_timeout(m_config.timeout);
        client.set_write_timeout(m_config.timeout);
        auto res = client.Post(m_path, headers, payload, "application/json");

        nlohmann::json audit = {{"fingerprint", request.fingerprint},
                                {"parse_attempt", request.attempt},
                                {"http_try", retry},
                                {"request", body}};
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            audit["error"] = last_error;
            m_audit->record(std::move(audit));
        } else {
            audit["status"] = res->status;
            audit["response"] = res->body;
            m_audit->record(std::move(audit));
            if (res->status == 200) {
                auto reply = nlohmann::json::parse(res->body, nullptr, false);
                const nlohmann::json* content = nullptr;
                if (!reply.is_discarded() && reply.contains("choices") && reply["choices"].is_array() &&
                    !reply["choices"].empty()) {
                    const auto& choice = reply["choices"][0];
                    if (choice.contains("message") && choice["message"].contains("content"))
                        content = &choice["message"]["content"];
                }
                if (content && content->is_string()) return content->get<std::string>();
                last_error = "response missing choices[0].message.content";
            } else if (!retryable_status(res->status)) {
                throw Error(ErrorCode::JudgeUnavailable,
                            "judge returned HTTP " + std::to_string(res->status) + ": " + truncate_utf8(res->body, 300));
            } else {
                last_error = "HTTP " + std::to_string(res->status);
            }
        }
        log::warn("judge_http_retry", {{"fingerprint", request.fingerprint}, {"try", retry}, {"error", last_error}});
        if (retry < m_config.retry.max_retries) std::this_thread::sleep_for(m_config.retry.backoff(retry));
    }
    throw Error(ErrorCode::JudgeUnavailable,
                "gave up after " + std::to_string(m_config.retry.max_retries + 1) + " tries: " + last_error);
}

HttpScorer::HttpScorer(std::string url, RetryPolicy retry, std::chrono::seconds timeout)
    : m_retry(retry), m_timeout(timeout) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "scorer URL needs a scheme: " + url);
    const auto path_begin = url.find('/', scheme_end + 3);
    m_origin = url.substr(0, path_begin);
    m_path = path_begin == std::string::npos ? "/" : url.substr(path_begin);
}

double HttpScorer::score(const std::string& trace) const {
    const std::string payload = nlohmann::json{{"trace", trace}}.dump();
    std::string last_error;
    for (std::size_t retry = 0; retry <= m_retry.max_retries; ++retry) {
        httplib::Client client(m_origin);
        client.set_connection_timeout(m_timeout);
        client.set_read_timeout(m_timeout);
        auto res = client.Post(m_path, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
        } else if (res->status == 200) {
            auto reply = nlohmann::json::parse(res->body, nullptr, false);
            if (!reply.is_discarded() && reply.contains("score") && reply["score"].is_number())
                return reply["score"].get<double>();
            throw Error(ErrorCode::ParseFailure, "scorer reply lacks a numeric \"score\"");
        } else if (!retryable_status(res->status)) {
            throw Error(ErrorCode::JudgeUnavailable, "scorer returned HTTP " + std::to_string(res->status));
        } else {
            last_error = "HTTP " + std::to_string(res->status);
        }
        if (retry < m_retry.max_retries) std::this_thread::sleep_for(m_retry.backoff(retry));
    }
    throw Error(ErrorCode::JudgeUnavailable, "scorer unavailable: " + last_error);
}

std::string request_fingerprint(std::string_view template_hash, std::string_view kind, std::size_t repeat,
                                std::string_view prompt) {
    std::uint64_t h = fnv1a64(template_hash);
    h = fnv1a64("|", h);
    h = fnv1a64(kind, h);
    h = fnv1a64("|" + std::to_string(repeat) + "|", h);
    h = fnv1a64(prompt, h);
    return to_hex(h);
}

std::vector<NodeId> decode_parents_reply(std::string_view reply, std::span<const PoolEntry> pool) {
    auto obj = extract_json_object(reply);
    if (!obj) throw Error(ErrorCode::ParseFailure, "no JSON object found");
    if (!obj->contains("parents") || !(*obj)["parents"].is_array())
        throw Error(ErrorCode::ParseFailure, "missing \"parents\" array");
    std::vector<NodeId> parents;
    for (const auto& v : (*obj)["parents"]) {
        if (v.is_number_integer() && v.get<long long>() >= 0) {
            parents.push_back(v.get<NodeId>());
        } else if (v.is_string()) {
            const std::string s = v.get<std::string>();
            char* end = nullptr;
            const unsigned long long id = std::strtoull(s.c_str(), &end, 10);
            if (s.empty() || *end != '\0') throw Error(ErrorCode::ParseFailure, "non-numeric parent id \"" + s + "\"");
            parents.push_back(static_cast<NodeId>(id));
        } else {
            throw Error(ErrorCode::ParseFailure, "parent ids must be integers");
        }
    }
    if (parents.empty()) throw Error(ErrorCode::ParseFailure, "empty parent set");
    for (NodeId id : parents) {
        const bool known = std::any_of(pool.begin(), pool.end(), [id](const PoolEntry& e) { return e.id == id; });
        if (!known) throw Error(ErrorCode::OutOfPool, "parent " + std::to_string(id) + " is not a candidate");
    }
    std::sort(parents.begin(), parents.end());
    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
    return parents;
}

std::string decode_summary_reply(std::string_view reply, std::size_t max_chars) {
    auto obj = extract_json_object(reply);
    if (!obj) throw Error(ErrorCode::ParseFailure, "no JSON object found");
    if (!obj->contains("summary") || !(*obj)["summary"].is_string())
        throw Error(ErrorCode::ParseFailure, "missing \"summary\" string");
    std::string summary;
    for (char c : (*obj)["summary"].get<std::string>()) summary.push_back(c == '\n' || c == '\r' || c == '\t' ? ' ' : c);
    const auto first = summary.find_first_not_of(' ');
    if (first == std::string::npos) throw Error(ErrorCode::ParseFailure, "empty summary");
    summary.erase(0, first);
    while (!summary.empty() && summary.back() == ' ') summary.pop_back();
    return truncate_utf8(summary, max_chars);
}

OverallVerdict decode_verdict_reply(std::string_view reply) {
    auto obj = extract_json_object(reply);
    if (!obj) throw Error(ErrorCode::ParseFailure, "no JSON object found");
    if (!obj->contains("verdict") || !(*obj)["verdict"].is_string())
        throw Error(ErrorCode::ParseFailure, "missing \"verdict\" string");
    auto verdict = parse_verdict((*obj)["verdict"].get<std::string>());
    if (!verdict) throw Error(ErrorCode::ParseFailure, "verdict must be A, B or tie");
    std::string rationale = obj->value("rationale", std::string{});
    if (*verdict != Verdict::Tie && rationale.find_first_not_of(" \n\t") == std::string::npos)
        throw Error(ErrorCode::ParseFailure, "a non-tie verdict needs a rationale");
    return {*verdict, std::move(rationale)};
}

LlmJudge::LlmJudge(std::shared_ptr<ChatBackend> backend, PromptTemplates templates, LlmJudgeOptions options)
    : m_backend(std::move(backend)),
      m_templates(std::move(templates)),
      m_options(options),
      m_template_hash(m_templates.hash()) {
    if (!m_backend) throw Error(ErrorCode::InvalidArgument, "LLM judge needs a backend");
}

template <typename Parse>
auto LlmJudge::ask(std::string_view kind, std::size_t repeat, const std::string& prompt, double temperature,
                   Parse&& parse) {
    ChatRequest request;
    request.temperature = temperature;
    request.fingerprint = request_fingerprint(m_template_hash, kind, repeat, prompt);
    request.messages.push_back({"system", m_templates.get(TemplateKind::System)});
    request.messages.push_back({"user", prompt});

    for (std::size_t attempt = 0;; ++attempt) {
        request.attempt = attempt;
        const std::string reply = m_backend->complete(request);
        try {
            return parse(reply);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ParseFailure && e.code() != ErrorCode::OutOfPool) throw;
            log::warn("judge_parse_retry", {{"kind", std::string(kind)},
                                            {"fingerprint", request.fingerprint},
                                            {"attempt", attempt},
                                            {"error", e.what()}});
            if (attempt >= m_options.parse_retries) throw;
            request.messages.push_back({"assistant", reply});
            request.messages.push_back(
                {"user", PromptTemplates::render(m_templates.get(TemplateKind::Reask), {{"error", e.what()}})});
        }
    }
}

std::string build_parents_prompt(const PromptTemplates& templates, const Step& step, std::span<const PoolEntry> pool,
                                 const LlmJudgeOptions& options) {
    return PromptTemplates::render(
        templates.get(TemplateKind::SelectParents),
        {{"pool", format_pool(pool, options.pool_node_chars)},
         {"step", "[" + std::to_string(step.index) + "]\n" + clip_for_judge(step.text, options.abstraction_max_chars)}});
}

std::string build_summary_prompt(const PromptTemplates& templates, std::string_view node_text,
                                 const LlmJudgeOptions& options) {
    return PromptTemplates::render(templates.get(TemplateKind::Summarize),
                                   {{"node_text", clip_for_judge(node_text, options.abstraction_max_chars)}});
}

std::string build_dimension_prompt(const PromptTemplates& templates, Dimension dimension, std::string_view first,
                                   std::string_view second, const LlmJudgeOptions& options) {
    return PromptTemplates::render(templates.get(template_for(dimension)),
                                   {{"abstraction_a", clip_for_judge(first, options.abstraction_max_chars)},
                                    {"abstraction_b", clip_for_judge(second, options.abstraction_max_chars)}});
}

std::string build_aggregate_prompt(const PromptTemplates& templates, const std::array<DimensionVerdict, 4>& verdicts) {
    nlohmann::json judgments = nlohmann::json::array();
    for (const auto& v : verdicts) {
        const char* label = v.verdict == Verdict::AWins ? "A" : v.verdict == Verdict::BWins ? "B" : "tie";
        judgments.push_back(
            {{"dimension", std::string(to_string(v.dimension))}, {"verdict", label}, {"rationale", v.rationale}});
    }
    return PromptTemplates::render(templates.get(TemplateKind::Aggregate), {{"judgments", judgments.dump(2)}});
}

std::vector<NodeId> LlmJudge::select_parents(const Step& step, std::span<const PoolEntry> pool) {
    if (pool.empty()) throw Error(ErrorCode::InvalidArgument, "attachment pool is empty");
    if (pool.size() == 1) return {pool.front().id};
    return ask("select_parents", 0, build_parents_prompt(m_templates, step, pool, m_options),
               m_options.structural_temperature,
               [&](std::string_view reply) { return decode_parents_reply(reply, pool); });
}

std::string LlmJudge::summarize_supernode(std::string_view node_text) {
    if (node_text.find_first_not_of(" \n\t\r") == std::string_view::npos)
        throw Error(ErrorCode::InvalidArgument, "cannot summarize an empty node");
    return ask("summarize", 0, build_summary_prompt(m_templates, node_text, m_options),
               m_options.structural_temperature,
               [&](std::string_view reply) { return decode_summary_reply(reply, m_options.summary_max_chars); });
}

DimensionVerdict LlmJudge::judge_dimension(Dimension dimension, std::string_view first, std::string_view second,
                                           const EvalContext& context) {
    if (first.find_first_not_of(" \n\t") == std::string_view::npos ||
        second.find_first_not_of(" \n\t") == std::string_view::npos)
        throw Error(ErrorCode::InvalidArgument, "abstractions must be non-empty");
    OverallVerdict v = ask(to_string(dimension), context.repeat,
                           build_dimension_prompt(m_templates, dimension, first, second, m_options),
                           m_options.pairwise_temperature,
                           [](std::string_view reply) { return decode_verdict_reply(reply); });
    return {dimension, v.verdict, std::move(v.rationale)};
}

OverallVerdict LlmJudge::aggregate(const std::array<DimensionVerdict, 4>& verdicts, const EvalContext& context) {
    if (m_options.aggregation == AggregationMode::Majority) return aggregate_majority(verdicts);
    return ask("aggregate", context.repeat, build_aggregate_prompt(m_templates, verdicts),
               m_options.pairwise_temperature, [](std::string_view reply) { return decode_verdict_reply(reply); });
}

}  // namespace trace_forge
