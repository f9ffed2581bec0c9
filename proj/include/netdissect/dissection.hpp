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

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netdissect/scoring.hpp"
#include "netdissect/thresholds.hpp"

namespace netdissect {

inline constexpr double kDefaultDetectorThreshold = 0.04;

/// Best concept for one unit. `assigned` is set only when the best IoU
/// exceeds the detector threshold.
struct DetectorAssignment {
    int unit = 0;
    bool assigned = false;
    int concept_id = 0;
    std::string concept_name;
    Category category = Category::object;
    double iou = 0;  // best IoU, reported even when unassigned
    double detector_threshold = kDefaultDetectorThreshold;

    friend bool operator==(const DetectorAssignment&, const DetectorAssignment&) = default;
};

struct ConceptStat {
    int concept_id = 0;
    std::string name;
    Category category = Category::object;
    int detectors = 0;
    double mean_iou = 0;

    friend bool operator==(const ConceptStat&, const ConceptStat&) = default;
};

struct LayerSummary {
    int units = 0;
    int total_detectors = 0;
    int unique_detectors = 0;
    double ratio = 0;  // unique / units
    std::array<int, kCategoryCount> unique_by_category{};
    std::array<int, kCategoryCount> detectors_by_category{};
    std::vector<ConceptStat> concepts;  // assigned concepts, by category then descending count then name

    friend bool operator==(const LayerSummary&, const LayerSummary&) = default;
};

/// Per unit, the max-IoU concept; ties go to the smallest (category, name).
std::vector<DetectorAssignment> assign_detectors(const IoUTable& table,
                                                 double detector_threshold = kDefaultDetectorThreshold);

LayerSummary summarize(std::span<const DetectorAssignment> assignments, int units);

struct DissectionOptions {
    double detector_threshold = kDefaultDetectorThreshold;
    ThresholdOptions thresholds;
    ScoringOptions scoring;
};

struct DissectionResult {
    double tau = kDefaultTau;
    UnitThresholds thresholds;
    IoUTable table;
    std::vector<DetectorAssignment> assignments;
    LayerSummary summary;
};

/// thresholds -> scoring -> assignment -> summary at one tau.
DissectionResult dissect(const VolumeSource& source, const DatasetIndex& index, double tau,
                         const DissectionOptions& options = {});

inline constexpr std::array<double, 5> kDefaultTauSweep = {0.0025, 0.005, 0.01, 0.02, 0.04};

/// One threshold pass and one scoring pass serve every tau (ascending).
std::vector<DissectionResult> tau_sweep(const VolumeSource& source, const DatasetIndex& index,
                                        std::span<const double> taus, const DissectionOptions& options = {});

struct UnitEvolution {
    int unit = 0;
    std::optional<DetectorAssignment> before;
    std::optional<DetectorAssignment> after;
    bool same = false;
};

/// Rows and columns: the six categories, then "none".
using TransitionMatrix = std::array<std::array<int, kCategoryCount + 1>, kCategoryCount + 1>;

struct EvolutionReport {
    std::vector<UnitEvolution> units;
    int stable = 0;
    double stable_fraction = 0;
    TransitionMatrix transitions{};
};

/// Compares two runs unit by unit. A unit is stable when it carries the same
/// (category, name) in both runs or is unassigned in both.
EvolutionReport diff_runs(std::span<const DetectorAssignment> before, std::span<const DetectorAssignment> after);

// unit,concept,category,iou (concept and category empty when unassigned)
void write_assignments_csv(std::span<const DetectorAssignment> assignments, const std::filesystem::path& path);
std::vector<DetectorAssignment> read_assignments_csv(const std::filesystem::path& path,
                                                     double detector_threshold = kDefaultDetectorThreshold);

void write_evolution_csv(const EvolutionReport& report, const std::filesystem::path& path);
void write_transitions_csv(const EvolutionReport& report, const std::filesystem::path& path);

std::string summary_to_json(const LayerSummary& summary, double tau, double detector_threshold,
                            const std::string& layer);

}  // namespace netdissect
