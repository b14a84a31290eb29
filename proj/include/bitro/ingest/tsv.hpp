// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bitro::ingest {

std::vector<std::string_view> split_tabs(std::string_view line);

/// Strict decimal parse; ParseError mentions `where` on failure.
double parse_double(std::string_view s, const std::string& where);
long long parse_int(std::string_view s, const std::string& where);

/// Shortest text that reads back to the identical double.
std::string format_double(double v);

/// Whole file, split into lines (trailing '\r' stripped, final empty line dropped).
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Writes text atomically enough for our purposes: truncate and write.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace bitro::ingest
