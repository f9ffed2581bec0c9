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

#include "netdissect/category.hpp"

namespace netdissect {

namespace {
constexpr std::array<std::string_view, kCategoryCount> kNames = {
    "scene", "object", "part", "material", "texture", "color"};
}

std::string_view to_string(Category c) noexcept { return kNames[index_of(c)]; }

std::optional<Category> parse_category(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kCategoryCount; ++i)
        if (kNames[i] == name) return static_cast<Category>(i);
    return std::nullopt;
}

}  // namespace netdissect
