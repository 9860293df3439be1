// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trace_forge {

enum class ErrorCode {
    InvalidArgument,
    EmptyCorpus,
    EmptyInput,
    JudgeUnavailable,
    InvalidParent,
    ParseFailure,
    OutOfPool,
    MissingSummary,
    NonFinite,
    GroupTooSmall,
    EmptyPool,
    NonConvergence,
    SingularSystem,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-checkable error code. All library failures
/// surface as this type; the CLI maps codes onto exit statuses.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), m_code(code) {}

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

}  // namespace trace_forge
