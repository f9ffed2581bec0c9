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

#include "netdissect/upsample.hpp"

#include <algorithm>
#include <cmath>

#include "netdissect/errors.hpp"

namespace netdissect {

AxisStencil axis_stencil(int cells, double offset, double stride, int pixels) {
    if (!(stride > 0)) throw UsageError("receptive-field stride must be positive");
    if (cells < 1 || pixels < 1) throw UsageError("upsample dimensions must be positive");
    AxisStencil s;
    s.lo.resize(static_cast<std::size_t>(pixels));
    s.hi.resize(static_cast<std::size_t>(pixels));
    s.w.resize(static_cast<std::size_t>(pixels));
    for (int p = 0; p < pixels; ++p) {
        const double t = (p - offset) / stride;
        int lo = 0;
        double w = 0;
        if (t <= 0) {
            lo = 0;
        } else if (t >= cells - 1) {
            lo = cells - 1;
        } else {
            lo = static_cast<int>(std::floor(t));
            w = t - lo;
        }
        s.lo[p] = lo;
        s.hi[p] = std::min(lo + 1, cells - 1);
        s.w[p] = w;
    }
    return s;
}

bool anchors_fit(int cells, double offset, double stride, int pixels) noexcept {
    return offset >= 0 && offset + (cells - 1) * stride <= pixels;
}

UpsampledMap upsample(std::span<const float> plane, int height, int width, const RfGeometry& geometry,
                      int target_height, int target_width) {
    if (plane.size() != static_cast<std::size_t>(height) * width) throw UsageError("plane size does not match dims");
    const auto ys = axis_stencil(height, geometry.offset_y, geometry.stride_y, target_height);
    const auto xs = axis_stencil(width, geometry.offset_x, geometry.stride_x, target_width);
    UpsampledMap out{target_height, target_width,
                     std::vector<double>(static_cast<std::size_t>(target_height) * target_width)};
    for (int y = 0; y < target_height; ++y) {
        const float* r0 = plane.data() + static_cast<std::size_t>(ys.lo[y]) * width;
        const float* r1 = plane.data() + static_cast<std::size_t>(ys.hi[y]) * width;
        for (int x = 0; x < target_width; ++x)
            out.values[static_cast<std::size_t>(y) * target_width + x] =
                bilinear(r0[xs.lo[x]], r0[xs.hi[x]], r1[xs.lo[x]], r1[xs.hi[x]], ys.w[y], xs.w[x]);
    }
    return out;
}

Bitmask binarize(const UpsampledMap& map, double threshold) {
    Bitmask out(map.width, map.height);
    for (std::size_t i = 0; i < map.values.size(); ++i)
        if (map.values[i] >= threshold) out.set(i);
    return out;
}

UpsamplePlan::UpsamplePlan(int act_height, int act_width, const RfGeometry& geometry, int target_height,
                           int target_width)
    : cells_y(act_height), cells_x(act_width), height(target_height), width(target_width),
      ys(axis_stencil(act_height, geometry.offset_y, geometry.stride_y, target_height)),
      xs(axis_stencil(act_width, geometry.offset_x, geometry.stride_x, target_width)) {
    int begin = 0;
    for (int x = 1; x <= target_width; ++x) {
        if (x == target_width || xs.lo[x] != xs.lo[begin] || xs.hi[x] != xs.hi[begin]) {
            x_runs.emplace_back(begin, x);
            begin = x;
        }
    }
}

void threshold_upsampled(std::span<const float> plane, const UpsamplePlan& plan, double threshold, Bitmask& out) {
    if (out.width() != plan.width || out.height() != plan.height) {
        out = Bitmask(plan.width, plan.height);
    } else {
        out.clear();
    }
    const int cw = plan.cells_x;
    for (int y = 0; y < plan.height; ++y) {
        const float* r0 = plane.data() + static_cast<std::size_t>(plan.ys.lo[y]) * cw;
        const float* r1 = plane.data() + static_cast<std::size_t>(plan.ys.hi[y]) * cw;
        const double wy = plan.ys.w[y];
        const std::size_t row = static_cast<std::size_t>(y) * plan.width;
        for (const auto& [xa, xb] : plan.x_runs) {
            const int lo = plan.xs.lo[xa], hi = plan.xs.hi[xa];
            const double a00 = r0[lo], a01 = r0[hi], a10 = r1[lo], a11 = r1[hi];
            const double mn = std::min({a00, a01, a10, a11});
            const double mx = std::max({a00, a01, a10, a11});
            // Interpolated values stay within [mn, mx] up to a few ulps.
            const double slack = 1e-12 * std::max({std::abs(mn), std::abs(mx), std::abs(threshold)}) + 1e-300;
            if (mx < threshold - slack) continue;
            if (mn > threshold + slack) {
                out.set_range(row + xa, row + xb);
                continue;
            }
            for (int x = xa; x < xb; ++x)
                if (bilinear(a00, a01, a10, a11, wy, plan.xs.w[x]) >= threshold) out.set(row + x);
        }
    }
}

}  // namespace netdissect
