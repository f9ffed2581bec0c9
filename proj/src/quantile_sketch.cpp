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

#include "netdissect/quantile_sketch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "netdissect/errors.hpp"

namespace netdissect {

std::uint64_t allowed_above(double tau, std::uint64_t n) noexcept {
    const long double exact = static_cast<long double>(tau) * static_cast<long double>(n);
    return static_cast<std::uint64_t>(std::floor(exact + 1e-9L * std::max<long double>(1, exact)));
}

QuantileSketch::QuantileSketch(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), seed_(seed) {
    if (capacity_ < 2) throw UsageError("sketch capacity must be at least 2");
}

std::size_t QuantileSketch::capacity_for(double epsilon, std::uint64_t expected_count) {
    if (!(epsilon > 0)) throw UsageError("sketch epsilon must be positive");
    // bound <= levels * n / (capacity - 1); solve for capacity at a fixed point
    // of the level count.
    double levels = 1;
    std::size_t capacity = 2;
    for (int iter = 0; iter < 64; ++iter) {
        capacity = static_cast<std::size_t>(std::ceil(2 * levels / epsilon)) + 1;
        const double ratio = static_cast<double>(expected_count) / static_cast<double>(capacity);
        const double next = ratio <= 1 ? 1 : std::ceil(std::log2(ratio)) + 1;
        if (next == levels) break;
        levels = std::max(levels, next);
    }
    return std::max<std::size_t>(capacity, 2);
}

bool QuantileSketch::next_parity(std::size_t level) {
    if (parity_.size() <= level) {
        const auto old = parity_.size();
        parity_.resize(level + 1);
        for (auto h = old; h <= level; ++h) parity_[h] = static_cast<std::uint8_t>((seed_ >> (h % 64)) & 1u);
    }
    const bool p = parity_[level];
    parity_[level] ^= 1u;
    return p;
}

void QuantileSketch::insert(float value) {
    if (levels_.empty()) levels_.emplace_back();
    levels_[0].push_back(value);
    ++count_;
    if (levels_[0].size() >= capacity_) compact(0);
}

void QuantileSketch::insert(std::span<const float> values) {
    for (float v : values) insert(v);
}

void QuantileSketch::compact(std::size_t level) {
    while (level < levels_.size() && levels_[level].size() >= capacity_) {
        if (levels_.size() == level + 1) levels_.emplace_back();
        auto& buf = levels_[level];
        auto& up = levels_[level + 1];
        std::sort(buf.begin(), buf.end());
        // An odd leftover (the largest item) stays at this level.
        const std::size_t even = buf.size() & ~std::size_t{1};
        const std::size_t start = next_parity(level) ? 1 : 0;
        for (std::size_t i = start; i < even; i += 2) up.push_back(buf[i]);
        const bool leftover = even < buf.size();
        const float last = leftover ? buf.back() : 0.0f;
        buf.clear();
        if (leftover) buf.push_back(last);
        error_bound_ += std::uint64_t{1} << level;
        ++level;
    }
}

void QuantileSketch::merge(const QuantileSketch& other) {
    if (other.capacity_ != capacity_) throw UsageError("cannot merge sketches of different capacity");
    if (levels_.size() < other.levels_.size()) levels_.resize(other.levels_.size());
    for (std::size_t h = 0; h < other.levels_.size(); ++h)
        levels_[h].insert(levels_[h].end(), other.levels_[h].begin(), other.levels_[h].end());
    count_ += other.count_;
    error_bound_ += other.error_bound_;
    for (std::size_t h = 0; h < levels_.size(); ++h)
        if (levels_[h].size() >= capacity_) compact(h);
}

std::size_t QuantileSketch::retained() const noexcept {
    std::size_t n = 0;
    for (const auto& l : levels_) n += l.size();
    return n;
}

std::uint64_t QuantileSketch::count_greater(float value) const {
    std::uint64_t n = 0;
    for (std::size_t h = 0; h < levels_.size(); ++h) {
        const auto w = std::uint64_t{1} << h;
        for (float v : levels_[h])
            if (v > value) n += w;
    }
    return n;
}

std::vector<float> QuantileSketch::upper_thresholds(std::span<const double> taus) const {
    if (count_ == 0) throw UsageError("quantile query on an empty sketch");
    std::vector<std::pair<float, std::uint64_t>> items;
    items.reserve(retained());
    for (std::size_t h = 0; h < levels_.size(); ++h)
        for (float v : levels_[h]) items.emplace_back(v, std::uint64_t{1} << h);
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<float> out;
    out.reserve(taus.size());
    for (double tau : taus) {
        const auto limit = allowed_above(tau, count_);
        // Walk distinct values from the top; `above` is the weight strictly greater.
        std::uint64_t above = 0;
        float best = items.front().first;
        std::size_t i = 0;
        while (i < items.size()) {
            const float v = items[i].first;
            if (above > limit) break;
            best = v;
            std::uint64_t same = 0;
            while (i < items.size() && items[i].first == v) same += items[i++].second;
            above += same;
        }
        out.push_back(best);
    }
    return out;
}

float QuantileSketch::upper_threshold(double tau) const {
    const double taus[] = {tau};
    return upper_thresholds(taus).front();
}

}  // namespace netdissect
