// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include "trace_forge/abstraction.hpp"
#include "trace_forge/dag.hpp"
#include "trace_forge/dataset.hpp"
#include "trace_forge/error.hpp"
#include "trace_forge/log.hpp"
#include "trace_forge/mdp.hpp"
#include "trace_forge/parallel.hpp"
#include "trace_forge/reward.hpp"
#include "trace_forge/scripted_judge.hpp"
#include "trace_forge/trace.hpp"
#include "trace_forge/util.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <unordered_map>

namespace trace_forge::cli {

namespace fs = std::filesystem;

nlohmann::json RunConfig::to_json() const {
    return {{"judge", judge ? nlohmann::json(*judge) : nlohmann::json(nullptr)},
            {"judge_model", judge_model},
            {"api_key_env", api_key_env},
            {"pool_cap", pool_cap},
            {"max_pairs", max_pairs},
            {"seed", seed},
            {"concurrency", concurrency},
            {"template_dir", template_dir ? nlohmann::json(*template_dir) : nlohmann::json(nullptr)}};
}

std::unique_ptr<Judge> make_judge(const RunConfig& config, std::shared_ptr<AuditLog> audit) {
    if (!config.judge) throw Error(ErrorCode::InvalidArgument, "this command needs --judge");
    const PromptTemplates templates =
        config.template_dir ? PromptTemplates::load(*config.template_dir) : PromptTemplates::defaults();
    const std::string& spec = *config.judge;
    if (spec.starts_with("scripted:"))
        return std::make_unique<ScriptedJudge>(ScriptedRules::load(spec.substr(9)), templates);
    if (spec.starts_with("http://") || spec.starts_with("https://")) {
        HttpJudgeConfig http;
        http.base_url = spec;
        http.model = config.judge_model;
        http.api_key_env = config.api_key_env;
        http.max_in_flight = config.concurrency;
        if (!std::getenv(config.api_key_env.c_str()))
            log::warn("judge_key_missing", {{"env", config.api_key_env}});
        return std::make_unique<LlmJudge>(std::make_shared<HttpChatBackend>(http, std::move(audit)), templates);
    }
    throw Error(ErrorCode::InvalidArgument, "--judge must be an http(s) URL or scripted:<rules.json>");
}

int exit_status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::JudgeUnavailable:
        case ErrorCode::ParseFailure:
        case ErrorCode::OutOfPool:
        case ErrorCode::Io: return kExitJudgeOrIo;
        default: return kExitValidation;
    }
}

namespace {

// Raw flag values plus the option handles needed to tell whether a flag was given.
struct SharedFlags {
    std::string config_file;
    std::string judge;
    std::string judge_model;
    std::string api_key_env;
    std::size_t pool_cap = 0;
    std::size_t max_pairs = 0;
    std::uint64_t seed = 0;
    std::size_t concurrency = 0;
    std::string template_dir;
    std::string manifest;
    std::string log_level = "info";
    std::map<std::string, CLI::Option*> opts;

    bool given(const std::string& name) const { return opts.at(name)->count() > 0; }
};

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const auto v = std::stoull(text, &used);
        if (used != text.size() || text.starts_with('-')) throw std::invalid_argument(text);
        return v;
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::InvalidArgument, what + " must be a non-negative integer, got \"" + text + "\"");
    }
}

RunConfig resolve_config(const SharedFlags& flags) {
    RunConfig cfg;
    nlohmann::json file = nlohmann::json::object();
    std::optional<std::string> path = flags.given("config") ? std::optional(flags.config_file) : env("TRACE_FORGE_CONFIG");
    if (path) {
        file = nlohmann::json::parse(read_file(*path), nullptr, false);
        if (file.is_discarded() || !file.is_object())
            throw Error(ErrorCode::InvalidArgument, "config file " + *path + " is not a JSON object");
    }

    auto pick_string = [&](const std::string& name, const std::string& flag_value, const char* env_name)
        -> std::optional<std::string> {
        if (flags.given(name)) return flag_value;
        if (auto v = env(env_name)) return v;
        if (file.contains(name) && file[name].is_string()) return file[name].get<std::string>();
        return std::nullopt;
    };
    auto pick_number = [&](const std::string& name, std::uint64_t flag_value, const char* env_name)
        -> std::optional<std::uint64_t> {
        if (flags.given(name)) return flag_value;
        if (auto v = env(env_name)) return parse_u64(*v, env_name);
        if (file.contains(name)) {
            if (!file[name].is_number_unsigned())
                throw Error(ErrorCode::InvalidArgument, "config key " + name + " must be a non-negative integer");
            return file[name].get<std::uint64_t>();
        }
        return std::nullopt;
    };

    cfg.judge = pick_string("judge", flags.judge, "TRACE_FORGE_JUDGE");
    if (auto v = pick_string("judge_model", flags.judge_model, "TRACE_FORGE_JUDGE_MODEL")) cfg.judge_model = *v;
    if (auto v = pick_string("api_key_env", flags.api_key_env, "TRACE_FORGE_API_KEY_ENV")) cfg.api_key_env = *v;
    cfg.template_dir = pick_string("template_dir", flags.template_dir, "TRACE_FORGE_TEMPLATE_DIR");
    if (auto v = pick_number("pool_cap", flags.pool_cap, "TRACE_FORGE_POOL_CAP")) cfg.pool_cap = *v;
    if (auto v = pick_number("max_pairs", flags.max_pairs, "TRACE_FORGE_MAX_PAIRS")) cfg.max_pairs = *v;
    if (auto v = pick_number("seed", flags.seed, "TRACE_FORGE_SEED")) cfg.seed = *v;
    if (auto v = pick_number("concurrency", flags.concurrency, "TRACE_FORGE_CONCURRENCY")) cfg.concurrency = *v;

    if (cfg.concurrency < 1) throw Error(ErrorCode::InvalidArgument, "concurrency must be at least 1");
    if (cfg.pool_cap < 1) throw Error(ErrorCode::InvalidArgument, "pool_cap must be at least 1");
    if (cfg.max_pairs < 1) throw Error(ErrorCode::InvalidArgument, "max_pairs must be at least 1");
    return cfg;
}

void add_shared_flags(CLI::App& app, SharedFlags& f) {
    f.opts["config"] = app.add_option("--config", f.config_file, "JSON config file (env TRACE_FORGE_CONFIG)");
    f.opts["judge"] =
        app.add_option("--judge", f.judge, "Judge: http(s) base URL or scripted:<rules.json> (env TRACE_FORGE_JUDGE)");
    f.opts["judge_model"] = app.add_option("--judge-model", f.judge_model, "Model name sent to a URL judge");
    f.opts["api_key_env"] =
        app.add_option("--api-key-env", f.api_key_env, "Env var holding the judge bearer token (default TRACE_FORGE_JUDGE_KEY)");
    f.opts["pool_cap"] = app.add_option("--pool-cap", f.pool_cap, "Attachment pool endpoint cap (default 8)");
    f.opts["max_pairs"] = app.add_option("--max-pairs", f.max_pairs, "Pairs sampled per prompt (default 4)");
    f.opts["seed"] = app.add_option("--seed", f.seed, "Random seed (default 0)");
    f.opts["concurrency"] = app.add_option("--concurrency", f.concurrency, "Worker threads (default 1)");
    f.opts["template_dir"] = app.add_option("--template-dir", f.template_dir, "Directory overriding prompt templates");
    f.opts["manifest"] = app.add_option("--manifest", f.manifest, "Write the run manifest JSON here");
    f.opts["log_level"] = app.add_option("--log-level", f.log_level, "debug, info, warn or error")
                              ->check(CLI::IsMember({"debug", "info", "warn", "error"}));
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::vector<ReasoningTrace> select_traces(const std::string& path, const std::string& only_id) {
    auto traces = load_traces_jsonl(path);
    if (only_id.empty()) return traces;
    std::vector<ReasoningTrace> out;
    for (auto& t : traces)
        if (t.id == only_id) out.push_back(std::move(t));
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no trace with id " + only_id + " in " + path);
    return out;
}

const ReasoningTrace& find_trace(const std::vector<ReasoningTrace>& traces, const std::string& id) {
    for (const auto& t : traces)
        if (t.id == id) return t;
    throw Error(ErrorCode::InvalidArgument, "no trace with id " + id);
}

std::vector<std::size_t> parse_n_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = std::min(text.find(',', start), text.size());
        const std::uint64_t n = parse_u64(text.substr(start, comma - start), "--n entry");
        if (n < 1) throw Error(ErrorCode::InvalidArgument, "--n entries must be at least 1");
        out.push_back(n);
        start = comma + 1;
    }
    return out;
}

// -- best-of-n ---------------------------------------------------------------

struct PoolItem {
    Candidate candidate;
    bool correct = false;
    nlohmann::json raw;
};

std::string best_of_n_report(const std::string& pool_path, const std::string& scorer_spec, const std::string& n_list,
                             std::size_t repeats, std::uint64_t seed, const std::string& correct_field) {
    std::map<std::string, std::vector<PoolItem>> problems;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(pool_path)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("problem_id") || !j.contains("trace"))
            throw Error(ErrorCode::InvalidArgument,
                        "pool line " + std::to_string(line_no) + " needs \"problem_id\" and \"trace\"");
        PoolItem item;
        item.candidate.trace = j["trace"].get<std::string>();
        item.candidate.response = j.value("response", std::string{});
        item.correct = j.value(correct_field, false);
        item.raw = std::move(j);
        problems[item.raw["problem_id"].get<std::string>()].push_back(std::move(item));
    }
    if (problems.empty()) throw Error(ErrorCode::EmptyPool, "candidate pool " + pool_path + " is empty");
    if (repeats < 1) throw Error(ErrorCode::InvalidArgument, "--repeats must be at least 1");
    const std::vector<std::size_t> ns = parse_n_list(n_list);

    std::optional<HttpScorer> http;
    std::string oracle_field;
    if (scorer_spec.starts_with("oracle:")) oracle_field = scorer_spec.substr(7);
    else if (scorer_spec.starts_with("http://") || scorer_spec.starts_with("https://")) http.emplace(scorer_spec);
    else throw Error(ErrorCode::InvalidArgument, "--scorer must be oracle:<field> or an http(s) URL");
    if (http == std::nullopt && oracle_field.empty()) throw Error(ErrorCode::InvalidArgument, "oracle scorer needs a field");

    std::map<std::size_t, std::pair<std::size_t, std::size_t>> tally;  // n -> (correct, selections)
    for (const auto& [problem_id, items] : problems) {
        // Scores are per candidate and do not depend on the permutation, so compute them once.
        std::unordered_map<std::string, double> score_of;
        for (const auto& item : items) {
            if (score_of.contains(item.candidate.trace)) continue;
            double s = 0.0;
            if (http) {
                s = http->score(item.candidate.trace);
            } else {
                const auto& v = item.raw.contains(oracle_field) ? item.raw[oracle_field] : nlohmann::json(nullptr);
                if (v.is_boolean()) s = v.get<bool>() ? 1.0 : 0.0;
                else if (v.is_number()) s = v.get<double>();
                else throw Error(ErrorCode::InvalidArgument, "candidate lacks numeric oracle field " + oracle_field);
            }
            score_of.emplace(item.candidate.trace, s);
        }
        const auto scorer = [&](const std::string& trace) { return score_of.at(trace); };

        for (std::size_t r = 0; r < repeats; ++r) {
            std::vector<std::size_t> order(items.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::mt19937_64 rng(mix_seed(seed, fnv1a64(problem_id) + r));
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
            std::vector<Candidate> shuffled;
            for (std::size_t i : order) shuffled.push_back(items[i].candidate);
            for (std::size_t n : ns) {
                if (n > shuffled.size()) continue;
                const std::size_t pick = best_of_n(shuffled, scorer, n);
                auto& [correct, total] = tally[n];
                correct += items[order[pick]].correct ? 1 : 0;
                ++total;
            }
        }
    }

    std::string csv = "n,accuracy,selections\n";
    for (std::size_t n : ns) {
        auto it = tally.find(n);
        if (it == tally.end() || it->second.second == 0) {
            log::warn("best_of_n_skipped", {{"n", n}, {"reason", "every problem has fewer candidates"}});
            continue;
        }
        const double acc = static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
        csv += std::to_string(n) + "," + format_double(acc) + "," + std::to_string(it->second.second) + "\n";
    }
    return csv;
}

std::vector<ReasoningDag> load_dags(const std::string& path, const std::string& only_id) {
    std::vector<ReasoningDag> dags;
    const std::string contents = read_file(path);
    auto add = [&](const nlohmann::json& j) {
        ReasoningDag dag = dag_from_json(j.contains("dag") ? j["dag"] : j);
        if (only_id.empty() || dag.trace_id == only_id) dags.push_back(std::move(dag));
    };
    auto whole = nlohmann::json::parse(contents, nullptr, false);
    if (!whole.is_discarded() && whole.is_object()) {
        add(whole);
    } else {
        std::size_t line_no = 0;
        for (const auto& line : read_lines(path)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object())
                throw Error(ErrorCode::InvalidArgument, path + " line " + std::to_string(line_no) + " is not a JSON object");
            add(j);
        }
    }
    if (dags.empty()) throw Error(ErrorCode::InvalidArgument, "no matching DAG in " + path);
    return dags;
}

std::string abstraction_row(const ReasoningDag& dag, const std::string& mode, const std::string& final_answer) {
    nlohmann::json row = {{"trace_id", dag.trace_id}, {"dag_id", dag_fingerprint(dag)}};
    if (mode != "micro") {
        std::map<NodeId, std::string> summaries;
        for (const auto& n : dag.nodes)
            if (n.summary) summaries[n.id] = *n.summary;
        row["macro_header_version"] = kMacroHeaderVersion;
        row["macro"] = linearize_macro(dag, summaries).text();
    }
    if (mode != "macro") {
        const MicroAbstraction micro = dominant_path(dag, default_answer_locator(final_answer));
        row["micro_node_ids"] = micro.node_ids;
        row["micro"] = micro.text;
    }
    return row.dump();
}

void write_manifest(const std::string& path, const nlohmann::json& manifest) {
    if (path.empty()) {
        log::info("run_manifest", manifest);
        return;
    }
    write_file(path, manifest.dump(2) + "\n");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"trace-forge: reasoning-trace structuring, judging and reward utilities", "trace-forge"};
    app.require_subcommand(1);
    app.fallthrough();
    SharedFlags flags;
    add_shared_flags(app, flags);

    // Subcommand arguments. Every path flag is required where the stage cannot run without it.
    std::string dag_path, mode = "both", final_answer;
    std::string traces_path, out_path, family_name, keywords_path, trace_id, a_id, b_id;
    std::string pool_path, scorer_spec = "oracle:correct", n_list = "1,2,4,8,16", correct_field = "correct";
    std::string check = "invariance", report_path;
    std::size_t repeats = 3, bon_repeats = 5, trials = 100;
    int rv = 0;
    double rt = 0.0, alpha = 0.2, gamma = 1.0, mdp_alpha = 0.2, beta = 1e-3;
    std::size_t steps = 0;
    bool dot = false;

    auto* stats = app.add_subcommand("stats-prefixes", "Leading-token frequencies over coarse blocks");
    stats->add_option("--traces", traces_path, "Trace JSONL")->required()->check(CLI::ExistingFile);
    stats->add_option("--out", out_path, "Output CSV (token,count,fraction)")->required();

    auto* partition = app.add_subcommand("partition", "Split traces into steps");
    partition->add_option("--traces", traces_path, "Trace JSONL")->required()->check(CLI::ExistingFile);
    partition->add_option("--family", family_name, "Keyword family override")
        ->check(CLI::IsMember({"qwen3", "deepseek_distill", "gpt_oss", "other"}));
    partition->add_option("--keywords", keywords_path, "Keyword file (one token per line, # comments)")
        ->check(CLI::ExistingFile);
    partition->add_option("--out", out_path, "Output steps JSONL")->required();

    auto* build_dag_cmd = app.add_subcommand("build-dag", "Build collapsed reasoning DAGs");
    build_dag_cmd->add_option("--traces", traces_path, "Trace JSONL")->required()->check(CLI::ExistingFile);
    build_dag_cmd->add_option("--trace-id", trace_id, "Only this trace");
    build_dag_cmd->add_flag("--dot", dot, "Also write <id>.dot per trace");
    build_dag_cmd->add_option("--out", out_path, "Output directory")->required();

    auto* linearize = app.add_subcommand("linearize", "Macro and micro abstractions per trace");
    linearize->add_option("--traces", traces_path, "Trace JSONL (DAGs are built and summarized with --judge)")
        ->check(CLI::ExistingFile);
    linearize->add_option("--dag", dag_path, "DAG JSON object or build-dag dags.jsonl")->check(CLI::ExistingFile);
    linearize->add_option("--mode", mode, "macro, micro or both (default both)")
        ->check(CLI::IsMember({"macro", "micro", "both"}));
    linearize->add_option("--final-answer", final_answer, "Literal answer marking answer-bearing nodes with --dag");
    linearize->add_option("--trace-id", trace_id, "Only this trace");
    linearize->add_option("--out", out_path, "Output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate-pair", "Robust pairwise judgment of two traces");
    evaluate->add_option("--traces", traces_path, "Trace JSONL holding both traces")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--a", a_id, "First trace id")->required();
    evaluate->add_option("--b", b_id, "Second trace id")->required();
    evaluate->add_option("--repeats", repeats, "Runs per presentation order (default 3)");
    evaluate->add_option("--out", out_path, "Output directory")->required();

    auto* dataset = app.add_subcommand("build-dataset", "Build a preference dataset");
    dataset->add_option("--traces", traces_path, "Trace JSONL")->required()->check(CLI::ExistingFile);
    dataset->add_option("--repeats", repeats, "Runs per presentation order (default 3)");
    dataset->add_option("--out", out_path, "Output directory")->required();

    auto* bon = app.add_subcommand("best-of-n", "Accuracy of best-of-N selection versus N");
    bon->add_option("--pool", pool_path, "Candidate JSONL {problem_id, trace, response, correct, ...}")
        ->required()
        ->check(CLI::ExistingFile);
    bon->add_option("--scorer", scorer_spec, "oracle:<field> or a reward-model URL (default oracle:correct)");
    bon->add_option("--n", n_list, "Comma-separated N values (default 1,2,4,8,16)");
    bon->add_option("--repeats", bon_repeats, "Random candidate orders per problem (default 5)");
    bon->add_option("--correct-field", correct_field, "Boolean field marking a correct response (default correct)");
    bon->add_option("--out", out_path, "Output CSV (n,accuracy,selections)")->required();

    auto* reward = app.add_subcommand("reward", "Evaluate the gated reward for one input");
    reward->add_option("--rv", rv, "Verifier outcome, 0 or 1")->required()->check(CLI::IsMember({0, 1}));
    reward->add_option("--rt", rt, "Thinking reward")->required();
    reward->add_option("--alpha", alpha, "Blend weight in [0,1] (default 0.2)")->check(CLI::Range(0.0, 1.0));
    reward->add_option("--gamma", gamma, "Discount in (0,1] for the step-discounted form (default 1)");
    reward->add_option("--steps", steps, "Reasoning step count T (default 0)");

    auto* mdp = app.add_subcommand("simulate-mdp", "Randomized tabular-MDP checks");
    mdp->add_option("--trials", trials, "Number of random instances (default 100)");
    mdp->add_option("--check", check, "invariance or improvement")->check(CLI::IsMember({"invariance", "improvement"}));
    mdp->add_option("--alpha", mdp_alpha, "Shaping / thinking-advantage weight (default 0.2)");
    mdp->add_option("--beta", beta, "NPG step size (default 1e-3)");
    mdp->add_option("--report", report_path, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        err << app.help();
        return kExitValidation;
    }

    static const std::map<std::string, log::Level> levels = {
        {"debug", log::Level::Debug}, {"info", log::Level::Info}, {"warn", log::Level::Warn}, {"error", log::Level::Error}};
    log::set_min_level(levels.at(flags.log_level));

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const RunConfig cfg = resolve_config(flags);
        nlohmann::json manifest = {{"command", command}, {"config", cfg.to_json()}, {"outputs", nlohmann::json::array()}};
        std::string manifest_path = flags.manifest;
        auto output_dir = [&](const std::string& dir) {
            ensure_dir(dir);
            if (manifest_path.empty()) manifest_path = join_path(dir, "manifest.json");
        };
        auto note_output = [&](const std::string& path) { manifest["outputs"].push_back(path); };
        std::shared_ptr<AuditLog> audit;
        auto judge_for = [&](const std::string& dir) {
            if (cfg.judge && !cfg.judge->starts_with("scripted:")) {
                const std::string audit_path = join_path(dir, "judge_audit.jsonl");
                write_file(audit_path, "");
                note_output(audit_path);
                audit = std::make_shared<AuditLog>(audit_path);
            }
            return make_judge(cfg, audit);
        };
        AnalysisOptions analysis;
        analysis.pool_cap = cfg.pool_cap;
        log::info("command_start", {{"command", command}});

        if (command == "stats-prefixes") {
            manifest["args"] = {{"traces", traces_path}};
            write_file(out_path, prefix_stats_csv(compute_prefix_stats(load_traces_jsonl(traces_path))));
            note_output(out_path);
        } else if (command == "partition") {
            manifest["args"] = {{"traces", traces_path}, {"family", family_name}, {"keywords", keywords_path}};
            std::optional<ModelFamily> family;
            if (!family_name.empty()) family = parse_model_family(family_name);
            std::string lines;
            for (const auto& t : load_traces_jsonl(traces_path)) {
                const ModelFamily fam = family.value_or(t.model_family);
                const KeywordSet kw = keywords_path.empty() ? default_keywords(fam) : load_keyword_file(keywords_path, fam);
                const auto steps_out = partition_trace(t.text, kw);
                lines += nlohmann::json{{"trace_id", t.id}, {"model_family", std::string(to_string(fam))},
                                        {"steps", steps_to_json(steps_out)}}
                             .dump() +
                         "\n";
            }
            write_file(out_path, lines);
            note_output(out_path);
        } else if (command == "build-dag") {
            output_dir(out_path);
            manifest["args"] = {{"traces", traces_path}, {"trace_id", trace_id}};
            auto judge = judge_for(out_path);
            const auto traces = select_traces(traces_path, trace_id);
            std::vector<std::string> lines(traces.size());
            std::vector<std::string> dots(traces.size());
            parallel_for(traces.size(), cfg.concurrency, [&](std::size_t i) {
                const ReasoningTrace& t = traces[i];
                const auto steps_out = partition_trace(t.text, keywords_for(analysis, t.model_family));
                const auto built = build_dag_logged(t.id, steps_out, *judge, {cfg.pool_cap});
                nlohmann::json decisions = nlohmann::json::array();
                for (const auto& d : built.decisions)
                    decisions.push_back({{"node", d.node}, {"pool", d.pool.all_ids()}, {"parents", d.parents},
                                         {"queries", d.queries}, {"fallback", d.fallback}});
                lines[i] = nlohmann::json{{"dag", dag_to_json(built.dag)}, {"decisions", decisions}}.dump() + "\n";
                if (dot) dots[i] = export_dot(built.dag);
            });
            const std::string file = join_path(out_path, "dags.jsonl");
            std::string all;
            for (const auto& l : lines) all += l;
            write_file(file, all);
            note_output(file);
            for (std::size_t i = 0; i < traces.size(); ++i) {
                if (dots[i].empty()) continue;
                const std::string dot_path = join_path(out_path, traces[i].id + ".dot");
                write_file(dot_path, dots[i]);
                note_output(dot_path);
            }
        } else if (command == "linearize") {
            if (traces_path.empty() == dag_path.empty())
                throw Error(ErrorCode::InvalidArgument, "linearize needs exactly one of --traces or --dag");
            output_dir(out_path);
            manifest["args"] = {{"traces", traces_path}, {"dag", dag_path}, {"mode", mode}, {"trace_id", trace_id}};
            std::vector<std::string> lines;
            if (!dag_path.empty()) {
                std::vector<ReasoningDag> dags = load_dags(dag_path, trace_id);
                bool need_summaries = false;
                for (const auto& d : dags)
                    for (const auto& n : d.nodes) need_summaries = need_summaries || !n.summary;
                std::unique_ptr<Judge> judge;
                if (need_summaries && mode != "micro") judge = judge_for(out_path);
                lines.resize(dags.size());
                parallel_for(dags.size(), cfg.concurrency, [&](std::size_t i) {
                    ReasoningDag& dag = dags[i];
                    if (judge)
                        for (auto& n : dag.nodes)
                            if (!n.summary) n.summary = judge->summarize_supernode(n.text);
                    lines[i] = abstraction_row(dag, mode, final_answer) + "\n";
                });
            } else {
                auto judge = judge_for(out_path);
                const auto traces = select_traces(traces_path, trace_id);
                lines.resize(traces.size());
                parallel_for(traces.size(), cfg.concurrency, [&](std::size_t i) {
                    const AnalyzedTrace a = analyze_trace(traces[i], *judge, analysis);
                    lines[i] = abstraction_row(a.dag, mode, traces[i].final_answer) + "\n";
                });
            }
            const std::string file = join_path(out_path, "abstractions.jsonl");
            std::string all;
            for (const auto& l : lines) all += l;
            write_file(file, all);
            note_output(file);
        } else if (command == "evaluate-pair") {
            output_dir(out_path);
            manifest["args"] = {{"traces", traces_path}, {"a", a_id}, {"b", b_id}, {"repeats", repeats}};
            auto judge = judge_for(out_path);
            const auto traces = load_traces_jsonl(traces_path);
            std::vector<AnalyzedTrace> sides(2);
            const std::array<std::string, 2> ids = {a_id, b_id};
            parallel_for(2, cfg.concurrency, [&](std::size_t i) {
                sides[i] = analyze_trace(find_trace(traces, ids[i]), *judge, analysis);
            });
            const PairJudgment judgment =
                robust_compare(*judge, sides[0].side(), sides[1].side(), {repeats, cfg.concurrency});
            const std::string file = join_path(out_path, "judgment.json");
            write_file(file, to_json(judgment).dump(2) + "\n");
            note_output(file);
            log::info("pair_judged", {{"final_label", std::string(to_string(judgment.final_label))}});
        } else if (command == "build-dataset") {
            output_dir(out_path);
            manifest["args"] = {{"traces", traces_path}, {"repeats", repeats}};
            auto judge = judge_for(out_path);
            DatasetConfig dc;
            dc.max_pairs = cfg.max_pairs;
            dc.seed = cfg.seed;
            dc.concurrency = cfg.concurrency;
            dc.repeats = repeats;
            dc.analysis = analysis;
            const auto traces = load_traces_jsonl(traces_path);
            const DatasetResult result = build_dataset(traces, *judge, dc);
            const std::string train = join_path(out_path, "train.jsonl");
            const std::string stats_path = join_path(out_path, "stats.csv");
            const std::string judgments = join_path(out_path, "judgments.jsonl");
            write_file(train, records_to_jsonl(result.records));
            write_file(stats_path, stats_csv(result.stats));
            std::string jl;
            for (const auto& j : result.judgments) jl += to_json(j).dump() + "\n";
            write_file(judgments, jl);
            for (const auto& p : {train, stats_path, judgments}) note_output(p);
        } else if (command == "best-of-n") {
            manifest["args"] = {{"pool", pool_path}, {"scorer", scorer_spec}, {"n", n_list}, {"repeats", bon_repeats}};
            write_file(out_path, best_of_n_report(pool_path, scorer_spec, n_list, bon_repeats, cfg.seed, correct_field));
            note_output(out_path);
        } else if (command == "reward") {
            const RewardInputs in{rv, rt, alpha, gamma, steps};
            out << nlohmann::json{{"gated_reward", gated_reward(in)},
                                  {"potential_shaped_reward", potential_shaped_reward(in)}}
                       .dump()
                << "\n";
            manifest["args"] = {{"rv", rv}, {"rt", rt}, {"alpha", alpha}, {"gamma", gamma}, {"steps", steps}};
        } else if (command == "simulate-mdp") {
            manifest["args"] = {{"trials", trials}, {"check", check}, {"alpha", mdp_alpha}, {"beta", beta}};
            std::vector<MdpTrial> rows(trials);
            parallel_for(trials, cfg.concurrency, [&](std::size_t i) {
                rows[i] = run_mdp_trial(mix_seed(cfg.seed, i), mdp_alpha, beta);
            });
            write_file(report_path, mdp_trials_csv(rows));
            note_output(report_path);
            std::size_t ok = 0;
            for (const auto& r : rows)
                ok += check == "invariance" ? (r.invariance_ok ? 1 : 0) : (r.delta_v > -1e-9 && r.d_trm >= 0.0 ? 1 : 0);
            log::info("mdp_summary", {{"check", check}, {"trials", trials}, {"passed", ok}});
            write_manifest(manifest_path, manifest);
            return ok == trials ? kExitOk : kExitValidation;
        }

        write_manifest(manifest_path, manifest);
        log::info("command_done", {{"command", command}});
        return kExitOk;
    } catch (const Error& e) {
        log::emit(log::Level::Error, "command_failed",
                  {{"command", command}, {"code", std::string(to_string(e.code()))}, {"error", e.what()}});
        return exit_status_for(e.code());
    } catch (const std::exception& e) {
        log::emit(log::Level::Error, "command_failed", {{"command", command}, {"error", e.what()}});
        return kExitJudgeOrIo;
    }
}

}  // namespace trace_forge::cli
