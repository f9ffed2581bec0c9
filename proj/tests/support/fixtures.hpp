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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netdissect/activation_store.hpp"
#include "netdissect/category.hpp"
#include "netdissect/dataset_index.hpp"

namespace netdissect::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

struct SynthConcept {
    int id = 0;
    std::string name;
    Category category = Category::object;
};

struct SynthImage {
    std::string id;
    int width = 0;
    int height = 0;
    Split split = Split::train;
    /// Label plane per pixel category (object, part, material, color); 0 is
    /// unlabeled. A category absent from the map has no mask file.
    std::map<Category, std::vector<std::uint16_t>> planes;
    std::vector<int> scene;
    std::vector<int> texture;
};

struct SynthDataset {
    std::vector<SynthConcept> concepts;
    std::vector<SynthImage> images;

    const SynthConcept& concept_by_id(int id) const;
    /// Images on which `id` appears.
    int samples(int id) const;
};

/// Writes category.csv, label.csv, index.csv and 16-bit PNG masks. Declared
/// sample counts are the true ones unless overridden.
void write_dataset(const SynthDataset& d, const std::filesystem::path& root,
                   const std::map<int, int>& declared_override = {});

/// Rectangles of random object/part/material labels plus scene and texture
/// tags on w x h images. Eight concepts: three objects, two parts, one
/// material, one scene, one texture.
SynthDataset random_dataset(std::uint64_t seed, int images, int width, int height);

/// Store whose unit k loosely follows concept (k mod concepts) plus noise.
/// `quantized` rounds values to quarters so ties are common.
MemorySource random_store(const SynthDataset& d, int units, int act_height, int act_width, std::uint64_t seed,
                          bool quantized = false, std::optional<RfGeometry> rf = std::nullopt);

/// Volumes of a MemorySource as a plain vector.
std::vector<ActivationVolume> volumes_of(const MemorySource& source);

}  // namespace netdissect::testing
