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

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace netdissect {

/// Packed binary image, row-major, one bit per pixel.
class Bitmask {
public:
    Bitmask() = default;
    Bitmask(int width, int height) : width_(width), height_(height), words_(word_count(width, height), 0) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(width_) * height_; }

    bool get(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1u; }
    bool get(int y, int x) const noexcept { return get(static_cast<std::size_t>(y) * width_ + x); }
    void set(std::size_t i) noexcept { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
    void set(int y, int x) noexcept { set(static_cast<std::size_t>(y) * width_ + x); }

    /// Sets bits [begin, end).
    void set_range(std::size_t begin, std::size_t end) noexcept {
        while (begin < end && (begin & 63)) set(begin++);
        while (begin + 64 <= end) {
            words_[begin >> 6] = ~std::uint64_t{0};
            begin += 64;
        }
        while (begin < end) set(begin++);
    }

    void fill() noexcept {
        if (size() > 0) set_range(0, size());
    }
    void clear() noexcept { std::fill(words_.begin(), words_.end(), 0); }

    std::uint64_t count() const noexcept {
        std::uint64_t n = 0;
        for (auto w : words_) n += static_cast<std::uint64_t>(std::popcount(w));
        return n;
    }

    /// |this ∩ other|; both masks must share dimensions.
    std::uint64_t and_count(const Bitmask& other) const noexcept {
        std::uint64_t n = 0;
        for (std::size_t i = 0; i < words_.size(); ++i)
            n += static_cast<std::uint64_t>(std::popcount(words_[i] & other.words_[i]));
        return n;
    }

    void merge(const Bitmask& other) noexcept {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
    }

    const std::vector<std::uint64_t>& words() const noexcept { return words_; }

    friend bool operator==(const Bitmask&, const Bitmask&) = default;

private:
    static std::size_t word_count(int w, int h) { return (static_cast<std::size_t>(w) * h + 63) / 64; }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint64_t> words_;
};

}  // namespace netdissect
