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
#include <set>
#include <string>
#include <vector>

#include "netdissect/dissection.hpp"

namespace netdissect {

/// Images with the highest peak activation for one unit, best first.
struct TopImage {
    std::size_t record = 0;  // position in the source
    float peak = 0;
};

/// Per unit, the `n` records with the largest maximum activation; ties go to
/// the earlier record.
std::vector<std::vector<TopImage>> top_activating_images(const VolumeSource& source, int n, int workers = 0);

enum class ReportFormat { csv, json, html };

/// Parses "csv,json,html"; csv and json are always emitted.
std::set<ReportFormat> parse_formats(const std::string& list);

struct ReportOptions {
    std::set<ReportFormat> formats = {ReportFormat::csv, ReportFormat::json};
    int top_images = 3;
    int workers = 0;
    /// Needed for per-unit HTML pages; may be null for csv/json only.
    const VolumeSource* source = nullptr;
    const DatasetIndex* index = nullptr;
};

/// Writes summary.json, assignments.csv and iou_table.csv; with html,
/// report/index.html, per-detector pages with mask overlays and
/// charts/unique_by_category.svg. Returns the written paths relative to
/// `out_dir`, sorted.
std::vector<std::string> emit_reports(const DissectionResult& result, const std::filesystem::path& out_dir,
                                      const ReportOptions& options = {});

/// Bar chart of unique detectors per category.
std::string unique_detectors_svg(const LayerSummary& summary);

}  // namespace netdissect
