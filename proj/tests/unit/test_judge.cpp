// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/error.hpp"
#include "trace_forge/judge.hpp"
#include "trace_forge/llm_judge.hpp"
#include "trace_forge/scripted_judge.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

using namespace trace_forge;

namespace {

RunRecord run_with(Order order, Verdict overall) {
    RunRecord r;
    r.order = order;
    r.overall.verdict = overall;
    return r;
}

// Counts the winner per order by hand and applies the rule as stated:
// strict overall majority plus strict majority inside each order.
FinalLabel tally_oracle(const std::vector<Verdict>& forward, const std::vector<Verdict>& reversed) {
    for (Verdict w : {Verdict::AWins, Verdict::BWins}) {
        const auto f = std::count(forward.begin(), forward.end(), w);
        const auto r = std::count(reversed.begin(), reversed.end(), w);
        const bool overall = 2 * (f + r) > static_cast<long>(forward.size() + reversed.size());
        const bool each = 2 * f > static_cast<long>(forward.size()) && 2 * r > static_cast<long>(reversed.size());
        if (overall && each) return w == Verdict::AWins ? FinalLabel::AWins : FinalLabel::BWins;
    }
    return FinalLabel::Discarded;
}

std::string fenced(const std::string& json) { return "Here you go:\n```json\n" + json + "\n```\n"; }

// Replies from a list in order; records every request it sees.
class FakeBackend final : public ChatBackend {
public:
    explicit FakeBackend(std::vector<std::string> replies) : m_replies(std::move(replies)) {}
    std::string complete(const ChatRequest& request) override {
        requests.push_back(request);
        return m_replies.at(std::min(requests.size() - 1, m_replies.size() - 1));
    }
    std::vector<ChatRequest> requests;

private:
    std::vector<std::string> m_replies;
};

EvaluationSide side(std::string id, std::string macro, std::string micro) {
    return {std::move(id), std::move(macro), std::move(micro)};
}

}  // namespace

TEST_CASE("verdict parsing is lenient") {
    for (const char* s : {"A", "a_wins", "trace a", "A>B", " a "}) CHECK(parse_verdict(s) == Verdict::AWins);
    for (const char* s : {"B", "b_wins", "Trace B"}) CHECK(parse_verdict(s) == Verdict::BWins);
    for (const char* s : {"tie", "equal", "TIE"}) CHECK(parse_verdict(s) == Verdict::Tie);
    CHECK_FALSE(parse_verdict("maybe"));
    CHECK(swapped(Verdict::AWins) == Verdict::BWins);
    CHECK(swapped(Verdict::Tie) == Verdict::Tie);
    CHECK(parse_dimension("micro_effectiveness") == Dimension::MicroEffectiveness);
}

TEST_CASE("majority aggregation") {
    std::array<DimensionVerdict, 4> v;
    for (std::size_t i = 0; i < 4; ++i) v[i].dimension = kAllDimensions[i];
    CHECK(aggregate_majority(v).verdict == Verdict::Tie);
    v[0].verdict = Verdict::AWins;
    CHECK(aggregate_majority(v).verdict == Verdict::AWins);
    v[1].verdict = Verdict::BWins;
    CHECK(aggregate_majority(v).verdict == Verdict::Tie);
    v[2].verdict = Verdict::BWins;
    CHECK(aggregate_majority(v).verdict == Verdict::BWins);
}

TEST_CASE("final label tally agrees with the rule on every 3+3 outcome") {
    const std::array<Verdict, 3> all = {Verdict::AWins, Verdict::BWins, Verdict::Tie};
    for (int code = 0; code < 729; ++code) {
        std::vector<Verdict> fwd, rev;
        std::vector<RunRecord> runs;
        int c = code;
        for (int i = 0; i < 6; ++i, c /= 3) {
            const Verdict v = all[c % 3];
            (i < 3 ? fwd : rev).push_back(v);
            runs.push_back(run_with(i < 3 ? Order::Forward : Order::Reversed, v));
        }
        INFO("code " << code);
        CHECK(tally_final_label(runs) == tally_oracle(fwd, rev));
    }
    CHECK(tally_final_label({}) == FinalLabel::Discarded);
}

TEST_CASE("position bias is discarded, content preference survives") {
    const auto a = side("a", "macro a [[double-checked]]", "micro a");
    const auto b = side("b", "macro b", "micro b");

    ScriptedRules bias;
    bias.verdict_rule = VerdictRule::parse("first_presented");
    ScriptedJudge biased(bias);
    const auto j1 = robust_compare(biased, a, b);
    CHECK(j1.final_label == FinalLabel::Discarded);
    REQUIRE(j1.runs.size() == 6);
    for (const auto& run : j1.runs)
        CHECK(run.overall.verdict == (run.order == Order::Forward ? Verdict::AWins : Verdict::BWins));

    ScriptedRules content;
    content.verdict_rule = VerdictRule::parse("contains:[[double-checked]]");
    ScriptedJudge fair(content);
    CHECK(robust_compare(fair, a, b).final_label == FinalLabel::AWins);
    CHECK(robust_compare(fair, b, a).final_label == FinalLabel::BWins);

    CHECK_THROWS_AS(robust_compare(fair, a, side("c", " ", "x")), Error);
    CHECK_THROWS_AS(robust_compare(fair, a, b, {0, 1}), Error);
}

TEST_CASE("robust compare is order-stable and concurrency-independent") {
    ScriptedRules rules;
    rules.verdict_rule = VerdictRule::parse("shorter");
    rules.dimension_rules[Dimension::MicroEfficiency] = VerdictRule::parse("longer");
    ScriptedJudge judge(rules);
    const auto a = side("a", "short", "a longer micro text");
    const auto b = side("b", "much longer macro", "tiny");
    const auto serial = robust_compare(judge, a, b, {3, 1});
    const auto parallel = robust_compare(judge, a, b, {3, 4});
    CHECK(to_json(serial) == to_json(parallel));
    CHECK(serial.runs[0].order == Order::Forward);
    CHECK(serial.runs[5].order == Order::Reversed);
    CHECK(serial.runs[5].repeat == 2);
    // un-swapped: every run agrees about the pair, whichever order it saw
    for (const auto& run : serial.runs)
        for (std::size_t d = 0; d < 4; ++d) CHECK(run.verdicts[d].verdict == serial.runs[0].verdicts[d].verdict);
}

TEST_CASE("extracting the JSON object from a reply") {
    CHECK(extract_json_object(fenced(R"({"a": 1})"))->at("a") == 1);
    CHECK(extract_json_object(R"(sure {"v": "}"} trailing)")->at("v") == "}");
    CHECK(extract_json_object(R"({broken {"ok": true})")->at("ok") == true);
    CHECK_FALSE(extract_json_object("no json here"));
    CHECK_FALSE(extract_json_object("[1, 2]"));
}

TEST_CASE("templates render and hash") {
    CHECK(PromptTemplates::render("x={x} y={y} {z}", {{"x", "1"}, {"y", "{x}"}}) == "x=1 y={x} {z}");
    const auto defaults = PromptTemplates::defaults();
    for (auto kind : kAllTemplateKinds) CHECK_FALSE(defaults.get(kind).empty());
    CHECK(defaults.get(TemplateKind::Reask).find("{error}") != std::string::npos);

    auto edited = defaults;
    CHECK(edited.hash() == defaults.hash());
    edited.set(TemplateKind::Aggregate, "changed");
    CHECK(edited.hash() != defaults.hash());

    const auto dir = std::filesystem::temp_directory_path() / "tf_templates_test";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "aggregate.txt") << "changed";
    const auto loaded = PromptTemplates::load(dir.string());
    CHECK(loaded.hash() == edited.hash());
    CHECK(loaded.get(TemplateKind::System) == defaults.get(TemplateKind::System));
    std::filesystem::remove_all(dir);
}

TEST_CASE("reply decoders") {
    const std::vector<PoolEntry> pool = {{0, "root"}, {3, "leaf"}};
    CHECK(decode_parents_reply(fenced(R"({"parents": [3, "0", 3]})"), pool) == std::vector<NodeId>{0, 3});
    auto code_of = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidArgument;
    };
    CHECK(code_of([&] { decode_parents_reply(R"({"parents": [7]})", pool); }) == ErrorCode::OutOfPool);
    CHECK(code_of([&] { decode_parents_reply(R"({"parents": []})", pool); }) == ErrorCode::ParseFailure);
    CHECK(code_of([&] { decode_parents_reply("nothing", pool); }) == ErrorCode::ParseFailure);
    CHECK(decode_summary_reply(R"({"summary": " sets\nup x "})", 100) == "sets up x");
    CHECK(decode_verdict_reply(R"({"verdict": "B", "rationale": "fewer detours"})").verdict == Verdict::BWins);
    CHECK(decode_verdict_reply(R"({"verdict": "tie"})").verdict == Verdict::Tie);
    CHECK(code_of([] { decode_verdict_reply(R"({"verdict": "A"})"); }) == ErrorCode::ParseFailure);
}

TEST_CASE("LLM judge re-asks after an unusable reply") {
    auto backend = std::make_shared<FakeBackend>(
        std::vector<std::string>{"I think A.", fenced(R"({"verdict": "A", "rationale": "clearer plan"})")});
    LlmJudge judge(backend, PromptTemplates::defaults());
    const auto v = judge.judge_dimension(Dimension::MacroEfficiency, "first", "second", {});
    CHECK(v.verdict == Verdict::AWins);
    REQUIRE(backend->requests.size() == 2);
    CHECK(backend->requests[0].fingerprint == backend->requests[1].fingerprint);
    CHECK(backend->requests[1].attempt == 1);
    CHECK(backend->requests[1].messages.size() == 4);
    CHECK(backend->requests[1].messages.back().content.find("no JSON object found") != std::string::npos);
    CHECK(backend->requests[0].temperature == doctest::Approx(0.7));

    auto hopeless = std::make_shared<FakeBackend>(std::vector<std::string>{"never json"});
    LlmJudge stuck(hopeless, PromptTemplates::defaults());
    CHECK_THROWS_AS(stuck.summarize_supernode("some text"), Error);
    CHECK(hopeless->requests.size() == 4);  // one ask plus three re-asks
    CHECK_THROWS_AS(stuck.summarize_supernode("  \n"), Error);

    const std::vector<PoolEntry> single = {{0, "root"}};
    CHECK(stuck.select_parents({1, "x", {0, 1}}, single) == std::vector<NodeId>{0});
}

TEST_CASE("HTTP backend against a local server") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const int n = calls++;
        const auto body = nlohmann::json::parse(req.body);
        CHECK(body.at("model") == "test-model");
        if (n == 0) {
            res.status = 503;
            return;
        }
        const std::string content = n < 3 ? "not json at all" : fenced(R"({"summary": "introduces x"})");
        res.set_content(nlohmann::json{{"choices", {{{"message", {{"content", content}}}}}}}.dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto audit = std::make_shared<AuditLog>();
    HttpJudgeConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/";
    cfg.model = "test-model";
    cfg.retry.initial_backoff = std::chrono::milliseconds(1);
    cfg.retry.max_backoff = std::chrono::milliseconds(2);
    cfg.timeout = std::chrono::seconds(5);
    auto backend = std::make_shared<HttpChatBackend>(cfg, audit);
    LlmJudge judge(backend, PromptTemplates::defaults());
    CHECK(judge.summarize_supernode("Let x be the count.") == "introduces x");
    CHECK(calls == 4);
    const auto entries = audit->entries();
    REQUIRE(entries.size() == 4);
    CHECK(entries[0].at("status") == 503);
    for (const auto& e : entries) CHECK(e.at("fingerprint") == entries[0].at("fingerprint"));

    server.stop();
    th.join();

    HttpJudgeConfig dead = cfg;
    dead.retry.max_retries = 1;
    dead.timeout = std::chrono::seconds(1);
    HttpChatBackend gone(dead, nullptr);
    try {
        gone.complete({{{"user", "hi"}}, 0.0, "fp", 0});
        FAIL("expected an outage");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::JudgeUnavailable);
    }
}

TEST_CASE("retry backoff is exponential and capped") {
    RetryPolicy p;
    CHECK(p.backoff(0).count() == 500);
    CHECK(p.backoff(1).count() == 1000);
    CHECK(p.backoff(3).count() == 4000);
    CHECK(p.backoff(10).count() == 8000);
}

TEST_CASE("scripted rules load from JSON") {
    const auto rules = ScriptedRules::from_json(nlohmann::json::parse(
        R"({"parents": {"2": [0]}, "default_parents": "root", "verdict_rule": "longer",
            "dimension_rules": {"micro_efficiency": "contains:ok"}})"));
    CHECK(rules.parents.at(2) == std::vector<NodeId>{0});
    CHECK(rules.default_parents.kind == ParentRule::Kind::Root);
    CHECK(rules.verdict_rule.kind == VerdictRule::Kind::Longer);
    CHECK(rules.dimension_rules.at(Dimension::MicroEfficiency).marker == "ok");
    CHECK(VerdictRule::parse("shorter").apply("ab", "abc") == Verdict::AWins);
    CHECK(VerdictRule::parse("shorter").apply("ab", "ab") == Verdict::Tie);
    CHECK(VerdictRule::parse("contains:k").apply("k", "k") == Verdict::Tie);
    CHECK_THROWS_AS(VerdictRule::parse("coin"), Error);
    CHECK_THROWS_AS(ParentRule::parse("random:x"), Error);
}

TEST_CASE("scripted judge is deterministic") {
    ScriptedRules rules;
    rules.default_parents = ParentRule::parse("random:3");
    ScriptedJudge j1(rules), j2(rules);
    const std::vector<PoolEntry> pool = {{0, "a"}, {2, "b"}, {4, "c"}};
    for (std::size_t i = 5; i < 40; ++i) {
        const Step s{i, "text " + std::to_string(i), {0, 1}};
        const auto p = j1.select_parents(s, pool);
        CHECK(p == j2.select_parents(s, pool));
        CHECK_FALSE(p.empty());
    }
    CHECK(j1.summarize_supernode("First sentence. Second one.") == j2.summarize_supernode("First sentence. Second one."));
    CHECK(j1.template_hash() == PromptTemplates::defaults().hash());
}
