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

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace netdissect {

/// Minimal RFC-4180 style reader: comma separated, double-quoted fields may
/// contain commas and doubled quotes. Header row is required.
class CsvReader {
public:
    explicit CsvReader(const std::filesystem::path& path);

    const std::vector<std::string>& header() const noexcept { return header_; }

    /// Column position of `name`; throws ParseError when absent.
    std::size_t column(std::string_view name) const;

    /// Calls `row_fn(fields, line_number)` for every non-empty data row.
    /// Rows whose width differs from the header raise ParseError.
    void for_each(const std::function<void(const std::vector<std::string>&, std::size_t)>& row_fn) const;

    const std::string& file() const noexcept { return file_; }

private:
    std::string file_;
    std::vector<std::string> header_;
    std::vector<std::pair<std::size_t, std::string>> lines_;
};

std::vector<std::string> split_csv_line(std::string_view line);
std::vector<std::string> split(std::string_view text, char sep);
std::string csv_escape(std::string_view field);

long long parse_int(std::string_view text, const std::string& file, std::size_t line);
double parse_double(std::string_view text, const std::string& file, std::size_t line);

}  // namespace netdissect
