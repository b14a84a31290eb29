// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/ingest/tsv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bitro/error.hpp"

namespace bitro::ingest {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t b = 0;
    for (std::size_t e; (e = line.find('\t', b)) != std::string_view::npos; b = e + 1) out.push_back(line.substr(b, e - b));
    out.push_back(line.substr(b));
    return out;
}

double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    if (!s.empty() && s.front() == '+') ++first;
    auto [p, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
        throw ParseError(where + ": '" + std::string(s) + "' is not a number");
    return v;
}

long long parse_int(std::string_view s, const std::string& where) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
        throw ParseError(where + ": '" + std::string(s) + "' is not an integer");
    return v;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw ContractError("cannot format value");
    return std::string(buf, p);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(f, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace bitro::ingest
