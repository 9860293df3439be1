// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "synthetic.hpp"

#include "trace_forge/error.hpp"
#include "trace_forge/trace.hpp"
#include "trace_forge/util.hpp"

#include <doctest.h>

#include <map>
#include <random>

using namespace trace_forge;

namespace {

std::vector<std::string> texts(const std::vector<RawBlock>& blocks) {
    std::vector<std::string> out;
    for (const auto& b : blocks) out.push_back(b.text);
    return out;
}

std::vector<std::string> texts(const std::vector<Step>& steps) {
    std::vector<std::string> out;
    for (const auto& s : steps) out.push_back(s.text);
    return out;
}

KeywordSet kw(std::set<std::string> words) { return {ModelFamily::Other, std::move(words)}; }

// Reference split: cut at every "\n\n", trim spaces and newlines, drop empties.
std::vector<std::string> reference_split(const std::string& text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t d = text.find("\n\n", pos);
        std::string piece = text.substr(pos, d == std::string::npos ? std::string::npos : d - pos);
        const auto b = piece.find_first_not_of(" \n");
        if (b != std::string::npos) {
            const auto e = piece.find_last_not_of(" \n");
            out.push_back(piece.substr(b, e - b + 1));
        }
        if (d == std::string::npos) break;
        pos = d + 2;
    }
    return out;
}

}  // namespace

TEST_CASE("coarse split on blank lines") {
    CHECK(texts(partition_coarse("A\n\nB\n\nC")) == std::vector<std::string>{"A", "B", "C"});
    CHECK(partition_coarse("").empty());
    CHECK(texts(partition_coarse("A\n\n\n\nB")) == std::vector<std::string>{"A", "B"});
    CHECK(partition_coarse(" \n\n \n").empty());

    const std::string text = "  first\n\nsecond\tpart \n\n\n third";
    const auto blocks = partition_coarse(text);
    REQUIRE(blocks.size() == 3);
    for (const auto& b : blocks) CHECK(text.substr(b.span.begin, b.span.size()) == b.text);
    CHECK(blocks[1].text == "second\tpart");
}

TEST_CASE("coarse split agrees with a reference split on random text") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 300; ++i) {
        const std::string text = tf_test::random_trace_text(rng, 1 + rng() % 12);
        CHECK(texts(partition_coarse(text)) == reference_split(text));
    }
}

TEST_CASE("leading token strips decoration") {
    CHECK(leading_token("So the sum") == "so");
    CHECK(leading_token("**But** then") == "but");
    CHECK(leading_token("- so we") == "so");
    CHECK(leading_token("1. Therefore") == "therefore");
    CHECK(leading_token("12) wait") == "wait");
    CHECK(leading_token("(Hmm, odd)") == "hmm");
    CHECK(leading_token("\xE2\x80\x9CWait\xE2\x80\x9D") == "wait");
    CHECK(leading_token("Wait,") == "wait");
    CHECK(leading_token("3x + 1") == "3x");
    CHECK(leading_token("1.5 is the value") == "1");
    CHECK(leading_token("...") == "");
    CHECK(leading_token("") == "");
}

TEST_CASE("prefix statistics count leading tokens") {
    std::vector<ReasoningTrace> corpus(1);
    corpus[0].text = "So one\n\nSo two\n\nBut three";
    const PrefixStats stats = compute_prefix_stats(corpus);
    CHECK(stats.total_blocks == 3);
    CHECK(stats.counts == std::map<std::string, std::size_t>{{"so", 2}, {"but", 1}});

    std::vector<ReasoningTrace> empty(2);
    CHECK_THROWS_AS(compute_prefix_stats(empty), Error);
    try {
        compute_prefix_stats(empty);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyCorpus);
    }
}

TEST_CASE("prefix statistics match an independent tally on 100 blocks") {
    std::mt19937_64 rng(5);
    const std::vector<std::string> heads = {"so", "but", "therefore", "need", "wait", "alpha", "the"};
    std::map<std::string, std::size_t> expected;
    std::vector<ReasoningTrace> corpus(4);
    for (int i = 0; i < 100; ++i) {
        const std::string& h = heads[rng() % heads.size()];
        ++expected[h];
        std::string& text = corpus[i % 4].text;
        if (!text.empty()) text += "\n\n";
        text += (rng() % 2 ? h : std::string(1, static_cast<char>(h[0] - 32)) + h.substr(1)) + " filler words";
    }
    const PrefixStats stats = compute_prefix_stats(corpus);
    CHECK(stats.total_blocks == 100);
    CHECK(stats.counts == expected);

    // merging per-trace statistics in either order gives the same result
    PrefixStats left, right;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        left.merge(compute_prefix_stats(std::span(corpus).subspan(i, 1)));
        right.merge(compute_prefix_stats(std::span(corpus).subspan(corpus.size() - 1 - i, 1)));
    }
    CHECK(left.counts == stats.counts);
    CHECK(right.counts == stats.counts);
    CHECK(left.total_blocks == stats.total_blocks);
}

TEST_CASE("prefix statistics CSV is sorted by count") {
    PrefixStats stats;
    stats.counts = {{"but", 1}, {"so", 2}};
    stats.total_blocks = 4;
    CHECK(prefix_stats_csv(stats) == "token,count,fraction\nso,2,0.5\nbut,1,0.25\n");
}

TEST_CASE("refinement merges blocks that do not open with a keyword") {
    const auto blocks = partition_coarse("Let x=1\n\nso x+1=2\n\nbut wait\n\ncheck: yes");
    const auto steps = refine_partition(blocks, kw({"so", "but"}));
    CHECK(texts(steps) == std::vector<std::string>{"Let x=1", "so x+1=2", "but wait\n\ncheck: yes"});
    CHECK(steps[2].span.begin == blocks[2].span.begin);
    CHECK(steps[2].span.end == blocks[3].span.end);

    CHECK(refine_partition(blocks, kw({})).size() == 1);
    CHECK(refine_partition(blocks, kw({"let", "so", "but", "check"})).size() == 4);
    CHECK(refine_partition({}, kw({"so"})).empty());
}

TEST_CASE("fenced code and display math never open a step") {
    const std::string text =
        "Start here\n\n```\nx = 1\n\nso = 2\n```\n\nSo after code\n\n$$\na\n\nbut b\n$$\n\nBut after math\n\n"
        "\\[\nq\n\nwait\n\\]\n\nWait done";
    const auto steps = partition_trace(text, default_keywords(ModelFamily::Qwen3));
    REQUIRE(steps.size() == 4);
    CHECK(steps[0].text.starts_with("Start here"));
    CHECK(steps[1].text.starts_with("So after code"));
    CHECK(steps[2].text.starts_with("But after math"));
    CHECK(steps[3].text == "Wait done");
}

TEST_CASE("step structure properties on random traces") {
    std::mt19937_64 rng(2026);
    const KeywordSet small = kw({"so", "but"});
    const KeywordSet large = default_keywords(ModelFamily::Other);
    for (int i = 0; i < 400; ++i) {
        const std::string text = tf_test::random_trace_text(rng, 1 + rng() % 15);
        const auto blocks = partition_coarse(text);
        const auto steps = partition_trace(text, large);

        // indices, spans and coverage
        std::size_t covered = 0;
        std::size_t block_total = 0;
        for (const auto& b : blocks) block_total += b.text.size();
        if (!blocks.empty()) block_total += kBlockJoiner.size() * (blocks.size() - 1);
        for (std::size_t s = 0; s < steps.size(); ++s) {
            CHECK(steps[s].index == s);
            if (s > 0) CHECK(steps[s].span.begin > steps[s - 1].span.end);
            covered += steps[s].text.size();
        }
        if (!steps.empty()) covered += kBlockJoiner.size() * (steps.size() - 1);
        CHECK(covered == block_total);

        // round trip
        std::string joined;
        for (std::size_t s = 0; s < steps.size(); ++s) joined += (s ? "\n\n" : "") + steps[s].text;
        CHECK(texts(partition_trace(joined, large)) == texts(steps));

        // monotone in the keyword set
        CHECK(partition_trace(text, small).size() <= steps.size());
    }
}

TEST_CASE("keyword config parsing") {
    const KeywordSet set = parse_keyword_config("# family keywords\nSo\n  but  # trailing\n\nWait,\n", ModelFamily::GptOss);
    CHECK(set.model_family == ModelFamily::GptOss);
    CHECK(set.keywords == std::set<std::string>{"so", "but", "wait"});
    CHECK(default_keywords(ModelFamily::Qwen3).contains("therefore"));
}

TEST_CASE("trace JSONL round trip") {
    const std::string line =
        R"({"id":"t1","prompt_id":"p","model_family":"gpt_oss","text":"a\r\n\r\nb","final_answer":"4","verified_correct":true})";
    const auto traces = parse_traces_jsonl(line + "\n\n");
    REQUIRE(traces.size() == 1);
    CHECK(traces[0].text == "a\n\nb");
    CHECK(traces[0].model_family == ModelFamily::GptOss);
    CHECK(traces[0].verified_correct);
    CHECK(parse_traces_jsonl(traces_to_jsonl(traces))[0].text == traces[0].text);
    CHECK_THROWS_AS(parse_traces_jsonl(R"({"id":"x"})"), Error);
    CHECK_THROWS_AS(parse_traces_jsonl("not json"), Error);
}

TEST_CASE("newline normalization and UTF-8 truncation") {
    CHECK(normalize_newlines("a\r\nb\rc\n") == "a\nb\nc\n");
    CHECK(truncate_utf8("h\xC3\xA9llo", 2) == "h");
    CHECK(truncate_utf8("abc", 10) == "abc");
}
