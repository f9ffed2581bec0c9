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

#include <span>
#include <vector>

#include "netdissect/activation_store.hpp"
#include "netdissect/bitmask.hpp"

namespace netdissect {

/// S_k: one unit's activation map bilinearly resampled to input resolution.
struct UpsampledMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    double at(int y, int x) const noexcept { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Interpolation stencil along one axis: pixel p reads cells lo[p] and
/// hi[p] with weight w[p] on hi. Pixels outside the outermost anchors clamp
/// to the nearest anchor (w = 0).
struct AxisStencil {
    std::vector<int> lo;
    std::vector<int> hi;
    std::vector<double> w;
};

AxisStencil axis_stencil(int cells, double offset, double stride, int pixels);

/// Bilinear value from the four surrounding cells, x then y.
inline double bilinear(double a00, double a01, double a10, double a11, double wy, double wx) noexcept {
    const double r0 = a00 + wx * (a01 - a00);
    const double r1 = a10 + wx * (a11 - a10);
    return r0 + wy * (r1 - r0);
}

/// Upsamples a (height x width) plane anchored per `geometry` to the target
/// size. Throws UsageError on non-positive strides or empty targets.
UpsampledMap upsample(std::span<const float> plane, int height, int width, const RfGeometry& geometry,
                      int target_height, int target_width);

/// M_k = S_k >= T_k, per pixel.
Bitmask binarize(const UpsampledMap& map, double threshold);

/// Precomputed stencils for one (activation dims, image dims, geometry).
struct UpsamplePlan {
    int cells_y = 0, cells_x = 0;
    int height = 0, width = 0;
    AxisStencil ys, xs;
    /// Column runs sharing the same (lo, hi) cell pair: [begin, end).
    std::vector<std::pair<int, int>> x_runs;

    UpsamplePlan(int act_height, int act_width, const RfGeometry& geometry, int target_height, int target_width);
};

/// Equivalent to binarize(upsample(...), threshold) bit for bit, but skips
/// interpolation wherever all four surrounding cells are clearly on one side of
/// the threshold. Writes into `out` (resized and cleared).
void threshold_upsampled(std::span<const float> plane, const UpsamplePlan& plan, double threshold, Bitmask& out);

/// True when every anchor lies inside the image.
bool anchors_fit(int cells, double offset, double stride, int pixels) noexcept;

}  // namespace netdissect
