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
#include <cstdint>
#include <optional>
#include <string_view>

namespace netdissect {

enum class Category : std::uint8_t { scene, object, part, material, texture, color };

inline constexpr std::size_t kCategoryCount = 6;

inline constexpr std::array<Category, kCategoryCount> kAllCategories = {
    Category::scene, Category::object, Category::part,
    Category::material, Category::texture, Category::color};

std::string_view to_string(Category c) noexcept;
std::optional<Category> parse_category(std::string_view name) noexcept;

/// Scene and texture labels cover the whole image; the rest are pixel masks.
constexpr bool is_full_image(Category c) noexcept {
    return c == Category::scene || c == Category::texture;
}

constexpr std::size_t index_of(Category c) noexcept { return static_cast<std::size_t>(c); }

/// Bit set over the six categories.
class CategorySet {
public:
    constexpr void insert(Category c) noexcept { bits_ |= static_cast<std::uint8_t>(1u << index_of(c)); }
    constexpr bool contains(Category c) const noexcept { return (bits_ >> index_of(c)) & 1u; }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr std::uint8_t bits() const noexcept { return bits_; }
    friend constexpr bool operator==(CategorySet, CategorySet) = default;

private:
    std::uint8_t bits_ = 0;
};

}  // namespace netdissect
