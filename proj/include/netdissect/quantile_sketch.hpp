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
#include <span>
#include <vector>

namespace netdissect {

/// Deterministic mergeable rank sketch over float samples.
///
/// Items live in levels; an item at level h stands for 2^h samples. When a
/// level reaches `capacity` items it is sorted and every other item (odd or
/// even positions, alternating per compaction) is promoted. Each compaction
/// at level h moves any rank query by at most 2^h, and the sketch keeps the
/// running sum of those amounts as a certified rank-error bound.
class QuantileSketch {
public:
    explicit QuantileSketch(std::size_t capacity = 4096, std::uint64_t seed = 0);

    /// Capacity whose worst-case bound stays within epsilon * expected_count / 2.
    static std::size_t capacity_for(double epsilon, std::uint64_t expected_count);

    void insert(float value);
    void insert(std::span<const float> values);

    /// Folds `other` in; both sketches must share capacity.
    void merge(const QuantileSketch& other);

    std::uint64_t count() const noexcept { return count_; }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t retained() const noexcept;

    /// Upper bound on |estimated - true| for any rank query.
    std::uint64_t rank_error_bound() const noexcept { return error_bound_; }

    /// Estimated number of samples strictly greater than `value`.
    std::uint64_t count_greater(float value) const;

    /// Smallest retained value v whose estimated count strictly above v is at
    /// most floor(tau * count). One sorted pass answers every tau.
    std::vector<float> upper_thresholds(std::span<const double> taus) const;
    float upper_threshold(double tau) const;

private:
    void compact(std::size_t level);
    bool next_parity(std::size_t level);

    std::size_t capacity_;
    std::uint64_t seed_;
    std::uint64_t count_ = 0;
    std::uint64_t error_bound_ = 0;
    std::vector<std::vector<float>> levels_;
    std::vector<std::uint8_t> parity_;
};

/// floor(tau * n) with a small guard against tau * n landing just below an
/// integer in floating point.
std::uint64_t allowed_above(double tau, std::uint64_t n) noexcept;

}  // namespace netdissect
