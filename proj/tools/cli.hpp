// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "trace_forge/error.hpp"
#include "trace_forge/judge.hpp"
#include "trace_forge/llm_judge.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace trace_forge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitJudgeOrIo = 2;

/// Settings shared by every subcommand. Resolved with precedence
/// flags > environment > config file > defaults.
struct RunConfig {
    std::optional<std::string> judge;  // URL or scripted:<rules.json>
    std::string judge_model = "gpt-4.1";
    std::string api_key_env = "TRACE_FORGE_JUDGE_KEY";
    std::size_t pool_cap = 8;
    std::size_t max_pairs = 4;
    std::uint64_t seed = 0;
    std::size_t concurrency = 1;
    std::optional<std::string> template_dir;

    nlohmann::json to_json() const;
};

/// Judge from a --judge spec. URL judges record every exchange in `audit`.
std::unique_ptr<Judge> make_judge(const RunConfig& config, std::shared_ptr<AuditLog> audit);

/// Exit status for an error code: 1 for validation problems, 2 for judge and I/O failures.
int exit_status_for(ErrorCode code);

/// Parses argv and runs one subcommand. Usage and parse errors go to `err`;
/// small scalar results (reward) go to `out`; every other artifact goes to files.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace trace_forge::cli
