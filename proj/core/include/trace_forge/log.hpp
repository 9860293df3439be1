// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <string_view>

namespace trace_forge::log {

enum class Level { Debug, Info, Warn, Error };

void set_min_level(Level level);

/// Writes one JSON object per line to stderr: {"level","event",...fields}.
/// Thread-safe; lines from concurrent workers never interleave.
void emit(Level level, std::string_view event, nlohmann::json fields = nlohmann::json::object());

inline void info(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
    emit(Level::Info, event, std::move(fields));
}
inline void warn(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
    emit(Level::Warn, event, std::move(fields));
}
inline void debug(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
    emit(Level::Debug, event, std::move(fields));
}

}  // namespace trace_forge::log
