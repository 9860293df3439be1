// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace trace_forge {

/// 64-bit FNV-1a. Used for request fingerprints and template hashes, never
/// for anything security-relevant.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// 16-char lowercase hex rendering of a 64-bit value.
std::string to_hex(std::uint64_t value);

/// SplitMix64 finalizer; mixes a seed with a key into an independent stream seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);

/// Shortest decimal text that round-trips the double.
std::string format_double(double value);

/// Unify CRLF and lone CR line endings to LF.
std::string normalize_newlines(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);
std::vector<std::string> read_lines(const std::string& path);

/// Truncate to at most `max_chars` bytes without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view text, std::size_t max_chars);

}  // namespace trace_forge
