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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "netdissect/bitmask.hpp"
#include "netdissect/category.hpp"
#include "netdissect/png_io.hpp"

namespace netdissect {

/// A labeled visual concept. Identity is (category, name); `id` is the label
/// code used in mask pixels.
struct Concept {
    int id = 0;
    std::string name;
    Category category = Category::object;
    int sample_count = 0;  // images carrying the label

    friend bool operator==(const Concept&, const Concept&) = default;
};

enum class Split : std::uint8_t { train, val };

struct MaskRef {
    Category category;
    std::string path;  // relative to the dataset root
};

struct ImageRecord {
    std::string image_id;
    int width = 0;
    int height = 0;
    Split split = Split::train;
    std::vector<MaskRef> pixel_masks;
    std::vector<int> fullimage_labels;  // retained scene/texture concept ids
    std::vector<int> pixel_labels;      // retained concept ids with a nonempty mask, sorted
    CategorySet category_present;
};

/// Binary annotation mask L_c for one concept on one image, at input resolution.
struct ConceptMask {
    int concept_id = 0;
    Bitmask bitmap;
};

/// Every retained label on one image, decoded. Produced once per image by the
/// scoring scan.
struct ImageLabels {
    std::vector<ConceptMask> pixel;  // sorted by concept id
    std::vector<int> full_image;     // sorted concept ids
};

struct LoadOptions {
    int min_samples = 10;
};

struct LoadReport {
    std::vector<Concept> dropped;       // below min_samples
    std::vector<std::string> warnings;  // e.g. declared vs counted sample mismatches
};

class DatasetIndex {
public:
    const std::filesystem::path& root() const noexcept { return root_; }

    /// Retained concepts sorted by id.
    const std::vector<Concept>& concepts() const noexcept { return concepts_; }
    const std::vector<ImageRecord>& images() const noexcept { return images_; }
    const LoadReport& report() const noexcept { return report_; }

    /// Category counts as declared in category.csv.
    const std::map<Category, int>& declared_category_counts() const noexcept { return declared_counts_; }

    const Concept* find_concept(int concept_id) const noexcept;
    const Concept* find_concept(Category category, std::string_view name) const noexcept;
    const ImageRecord* find_image(std::string_view image_id) const noexcept;

    /// Retained concept counts per category.
    std::array<int, kCategoryCount> category_counts() const noexcept;

    /// Union of every mask carrying `concept_id` on the image; all-ones for a
    /// full-image label; all-zeros when the concept is absent.
    ConceptMask concept_mask(std::string_view image_id, int concept_id) const;

    /// Decodes all retained labels of one image.
    ImageLabels decode_labels(const ImageRecord& image) const;

    /// Canonical JSON form; equal indexes serialize byte-identically.
    std::string serialize() const;

private:
    friend DatasetIndex load_index(const std::filesystem::path&, const LoadOptions&);

    std::filesystem::path root_;
    std::vector<Concept> concepts_;
    std::vector<ImageRecord> images_;
    std::unordered_map<int, std::size_t> concept_pos_;
    std::unordered_map<std::string, std::size_t> image_pos_;
    std::map<Category, int> declared_counts_;
    LoadReport report_;
};

/// Loads index.csv, label.csv and category.csv from `root`, decoding every
/// referenced mask to validate it and to count per-label image samples.
/// Throws ParseError for malformed files and ValidationError for dangling ids,
/// missing or mis-sized masks.
DatasetIndex load_index(const std::filesystem::path& root, const LoadOptions& options = {});

// ---------------------------------------------------------------------------
// Color naming

inline constexpr std::size_t kColorCount = 11;
inline constexpr std::array<std::string_view, kColorCount> kColorNames = {
    "black", "blue", "brown", "grey", "green", "orange", "pink", "purple", "red", "white", "yellow"};

/// Lookup from quantized RGB to one of the eleven color names. Each channel
/// is quantized to `levels` bins (bin = value * levels / 256); 8 levels by
/// default, 256 is the identity quantization.
class ColorTable {
public:
    explicit ColorTable(int levels = 8);

    int levels() const noexcept { return levels_; }
    void set(int r_bin, int g_bin, int b_bin, int color_index);
    std::optional<int> find(int r_bin, int g_bin, int b_bin) const;
    std::size_t size() const noexcept { return entries_.size(); }

    /// Color index for an 8-bit RGB value. Missing keys fall back to the
    /// nearest key by Euclidean distance in bin space; `fell_back` reports it.
    int lookup(std::uint8_t r, std::uint8_t g, std::uint8_t b, bool* fell_back = nullptr) const;

private:
    int key(int r, int g, int b) const noexcept { return (r * levels_ + g) * levels_ + b; }

    int levels_;
    std::unordered_map<int, int> entries_;
};

/// Reads a `r,g,b,color_id` CSV; color_id indexes kColorNames.
ColorTable load_color_table(const std::filesystem::path& path, int levels = 8);

struct ColorAnnotation {
    std::vector<ConceptMask> masks;    // kColorCount masks, concept_id = color index
    std::uint64_t fallback_pixels = 0; // pixels resolved by nearest-key fallback
};

/// Assigns each pixel exactly one color; the eleven masks partition the image.
ColorAnnotation annotate_colors(const RgbImage& image, const ColorTable& table);

}  // namespace netdissect
