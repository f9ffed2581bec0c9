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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "netdissect/activation_store.hpp"

namespace netdissect {

inline constexpr double kDefaultTau = 0.005;
inline constexpr double kDefaultSketchEpsilon = 1e-4;
/// Per-unit sample counts up to this use exact order statistics in auto mode.
inline constexpr std::uint64_t kExactModeLimit = std::uint64_t{1} << 24;

enum class ThresholdMode { automatic, exact, sketch };

/// Per-unit top-quantile levels T_k with P(a_k > T_k) <= tau over every
/// spatial location of every image.
struct UnitThresholds {
    std::string layer;
    double tau = kDefaultTau;
    ThresholdMode mode = ThresholdMode::exact;  // never automatic once computed
    double epsilon = 0;                         // 0 in exact mode
    std::vector<float> levels;                  // T_k
    std::vector<std::uint64_t> counts;          // samples observed per unit

    std::size_t units() const noexcept { return levels.size(); }
    friend bool operator==(const UnitThresholds&, const UnitThresholds&) = default;
};

struct ThresholdOptions {
    ThresholdMode mode = ThresholdMode::automatic;
    double epsilon = kDefaultSketchEpsilon;
    int workers = 0;
    std::uint64_t seed = 0;
};

/// One pass over the store answering every tau in `taus` (each in (0, 0.5]).
/// Exact mode returns the smallest observed v with #{a > v} <= floor(tau*N).
std::vector<UnitThresholds> compute_thresholds(const VolumeSource& source, std::span<const double> taus,
                                               const ThresholdOptions& options = {});
UnitThresholds compute_thresholds(const VolumeSource& source, double tau, const ThresholdOptions& options = {});

/// Per-unit fraction of samples strictly above T_k.
std::vector<double> fraction_above(const VolumeSource& source, const UnitThresholds& thresholds, int workers = 0);

std::string to_string(ThresholdMode mode);

void write_thresholds_json(const UnitThresholds& thresholds, const std::filesystem::path& path);
UnitThresholds read_thresholds_json(const std::filesystem::path& path);

}  // namespace netdissect
