// Copyright 2026 The netdissect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "netdissect/csv.hpp"

#include <charconv>
#include <fstream>

#include "netdissect/errors.hpp"

namespace netdissect {

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    if (text.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        auto piece = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        if (!piece.empty()) out.emplace_back(piece);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

CsvReader::CsvReader(const std::filesystem::path& path) : file_(path.string()) {
    std::ifstream in(path);
    if (!in) throw ParseError(file_, 0, "cannot open file");
    std::string line;
    std::size_t number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!have_header) {
            if (line.empty()) throw ParseError(file_, number, "missing header row");
            header_ = split_csv_line(line);
            have_header = true;
            continue;
        }
        if (line.empty()) continue;
        lines_.emplace_back(number, std::move(line));
    }
    if (!have_header) throw ParseError(file_, 0, "missing header row");
}

std::size_t CsvReader::column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return i;
    throw ParseError(file_, 1, "missing column '" + std::string(name) + "'");
}

void CsvReader::for_each(const std::function<void(const std::vector<std::string>&, std::size_t)>& row_fn) const {
    for (const auto& [number, line] : lines_) {
        auto fields = split_csv_line(line);
        if (fields.size() != header_.size())
            throw ParseError(file_, number,
                             "expected " + std::to_string(header_.size()) + " fields, got " +
                                 std::to_string(fields.size()));
        row_fn(fields, number);
    }
}

long long parse_int(std::string_view text, const std::string& file, std::size_t line) {
    long long value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty())
        throw ParseError(file, line, "expected integer, got '" + std::string(text) + "'");
    return value;
}

double parse_double(std::string_view text, const std::string& file, std::size_t line) {
    double value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty())
        throw ParseError(file, line, "expected number, got '" + std::string(text) + "'");
    return value;
}

}  // namespace netdissect
