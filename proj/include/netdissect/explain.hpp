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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netdissect/activation_store.hpp"
#include "netdissect/bitmask.hpp"
#include "netdissect/dissection.hpp"

namespace netdissect {

/// Linear classifier over pooled unit activations: score_c = w_c·x + b_c.
struct LinearHead {
    int units = 0;
    std::vector<std::string> class_names;
    std::vector<std::vector<double>> weights;  // [class][unit]
    std::vector<double> bias;                  // zero when absent
};

/// Reads `class,unit,weight`; a row whose unit is "bias" sets the class bias.
/// Every class must give a weight for every unit. Classes keep file order.
LinearHead load_linear_head(const std::filesystem::path& path, std::optional<int> expected_units = std::nullopt);

/// x_n = sum of unit n's map over all locations.
std::vector<double> pooled_features(const ActivationVolume& volume);

enum class SegmentationRule {
    quantile,         // the top q fraction of the instance's upsampled pixels
    fraction_of_max,  // pixels at or above q times the instance's maximum
};

struct ExplainOptions {
    int top_m = 4;
    double seg_quantile = 0.2;
    SegmentationRule rule = SegmentationRule::quantile;
};

struct UnitContribution {
    int unit = 0;
    double weight = 0;
    double activation = 0;    // pooled x_n
    double contribution = 0;  // w_n * x_n
    std::optional<DetectorAssignment> label;
};

struct UnitSegmentation {
    int unit = 0;
    double threshold = 0;
    Bitmask mask;
};

struct Explanation {
    std::string image_id;
    int predicted_class = 0;
    std::string class_name;
    double score = 0;
    std::vector<UnitContribution> contributions;  // non-increasing; ties by unit
    std::vector<UnitSegmentation> segmentations;  // one per top unit
};

/// Contributions sorted non-increasing with ties broken by unit index.
std::vector<UnitContribution> rank_contributions(std::span<const double> weights, std::span<const double> features);

/// Binary mask of one upsampled map under `rule`.
UnitSegmentation segment_instance(std::span<const double> upsampled, int height, int width, double q,
                                  SegmentationRule rule);

/// Explains the head's top class for one image. `assignments` may be empty.
/// top_m above K is clamped with a warning.
Explanation explain_prediction(const ActivationVolume& volume, const LinearHead& head,
                               std::span<const DetectorAssignment> assignments, const RfGeometry& geometry,
                               int image_height, int image_width, const ExplainOptions& options = {});

std::string explanation_to_json(const Explanation& e);

/// explanation.json plus mask_unitNNNN.png per segmented unit. Returns the
/// written file names.
std::vector<std::string> write_explanation(const Explanation& e, const std::filesystem::path& out_dir);

}  // namespace netdissect
