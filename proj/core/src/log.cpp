// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace trace_forge::log {
namespace {

std::atomic<Level> g_min_level{Level::Info};
std::mutex g_mutex;

const char* level_name(Level level) {
    switch (level) {
        case Level::Debug: return "debug";
        case Level::Info: return "info";
        case Level::Warn: return "warn";
        case Level::Error: return "error";
    }
    return "info";
}

}  // namespace

void set_min_level(Level level) { g_min_level.store(level); }

void emit(Level level, std::string_view event, nlohmann::json fields) {
    if (level < g_min_level.load()) return;
    nlohmann::json line = nlohmann::json::object();
    line["level"] = level_name(level);
    line["event"] = std::string(event);
    if (fields.is_object()) {
        for (auto& [key, value] : fields.items()) line[key] = value;
    }
    const std::string text = line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    std::lock_guard lock(g_mutex);
    std::fprintf(stderr, "%s\n", text.c_str());
}

}  // namespace trace_forge::log
