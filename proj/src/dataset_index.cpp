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

#include "netdissect/dataset_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"

#include "netdissect/csv.hpp"
#include "netdissect/errors.hpp"
#include "netdissect/log.hpp"

namespace netdissect {

namespace {

constexpr std::array<std::pair<std::string_view, Category>, 4> kMaskColumns = {{
    {"object_masks", Category::object},
    {"part_masks", Category::part},
    {"material_masks", Category::material},
    {"color_masks", Category::color},
}};

struct RawLabel {
    Concept concept_;
    int declared_samples = 0;
};

void require_file(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ParseError(path.string(), 0, "file not found");
}

}  // namespace

DatasetIndex load_index(const std::filesystem::path& root, const LoadOptions& options) {
    DatasetIndex index;
    index.root_ = root;

    const auto category_path = root / "category.csv";
    const auto label_path = root / "label.csv";
    const auto index_path = root / "index.csv";
    require_file(category_path);
    require_file(label_path);
    require_file(index_path);

    {
        CsvReader csv(category_path);
        const auto col_cat = csv.column("category");
        const auto col_count = csv.column("count");
        csv.for_each([&](const std::vector<std::string>& row, std::size_t line) {
            const auto cat = parse_category(row[col_cat]);
            if (!cat) throw ParseError(csv.file(), line, "unknown category '" + row[col_cat] + "'");
            index.declared_counts_[*cat] = static_cast<int>(parse_int(row[col_count], csv.file(), line));
        });
    }

    // Labels keyed by id; std::map keeps ids sorted.
    std::map<int, RawLabel> labels;
    {
        CsvReader csv(label_path);
        const auto col_id = csv.column("id");
        const auto col_name = csv.column("name");
        const auto col_cat = csv.column("category");
        const auto col_samples = csv.column("sample_count");
        std::set<std::pair<Category, std::string>> seen;
        csv.for_each([&](const std::vector<std::string>& row, std::size_t line) {
            const auto id = parse_int(row[col_id], csv.file(), line);
            if (id <= 0 || id > std::numeric_limits<std::uint16_t>::max())
                throw ParseError(csv.file(), line, "label id out of range 1..65535");
            const auto cat = parse_category(row[col_cat]);
            if (!cat) throw ParseError(csv.file(), line, "unknown category '" + row[col_cat] + "'");
            if (row[col_name].empty()) throw ParseError(csv.file(), line, "empty label name");
            if (!seen.emplace(*cat, row[col_name]).second)
                throw ValidationError(csv.file() + ":" + std::to_string(line) + ": duplicate concept " +
                                      std::string(to_string(*cat)) + ":" + row[col_name]);
            RawLabel raw;
            raw.concept_.id = static_cast<int>(id);
            raw.concept_.name = row[col_name];
            raw.concept_.category = *cat;
            raw.declared_samples = static_cast<int>(parse_int(row[col_samples], csv.file(), line));
            if (!labels.emplace(raw.concept_.id, std::move(raw)).second)
                throw ValidationError(csv.file() + ":" + std::to_string(line) + ": duplicate label id " +
                                      std::to_string(id));
        });
    }

    // Per-image raw label sets before filtering.
    struct RawImage {
        ImageRecord record;
        std::vector<int> full_ids;
        std::set<int> pixel_ids;
    };
    std::vector<RawImage> raw_images;
    {
        CsvReader csv(index_path);
        const auto col_id = csv.column("image_id");
        const auto col_w = csv.column("width");
        const auto col_h = csv.column("height");
        const auto col_split = csv.column("split");
        const auto col_scene = csv.column("scene");
        const auto col_texture = csv.column("texture");
        std::array<std::size_t, kMaskColumns.size()> mask_cols{};
        for (std::size_t i = 0; i < kMaskColumns.size(); ++i) mask_cols[i] = csv.column(kMaskColumns[i].first);

        std::set<std::string> seen_ids;
        csv.for_each([&](const std::vector<std::string>& row, std::size_t line) {
            RawImage raw;
            auto& rec = raw.record;
            rec.image_id = row[col_id];
            if (rec.image_id.empty()) throw ParseError(csv.file(), line, "empty image_id");
            if (!seen_ids.insert(rec.image_id).second)
                throw ValidationError(csv.file() + ":" + std::to_string(line) + ": duplicate image_id " +
                                      rec.image_id);
            rec.width = static_cast<int>(parse_int(row[col_w], csv.file(), line));
            rec.height = static_cast<int>(parse_int(row[col_h], csv.file(), line));
            if (rec.width <= 0 || rec.height <= 0) throw ParseError(csv.file(), line, "non-positive image size");
            if (row[col_split] == "train") {
                rec.split = Split::train;
            } else if (row[col_split] == "val") {
                rec.split = Split::val;
            } else {
                throw ParseError(csv.file(), line, "split must be train or val");
            }

            for (auto [col, cat] : {std::pair{col_scene, Category::scene}, std::pair{col_texture, Category::texture}}) {
                for (const auto& token : split(row[col], ';')) {
                    const auto id = static_cast<int>(parse_int(token, csv.file(), line));
                    const auto it = labels.find(id);
                    if (it == labels.end())
                        throw ValidationError(csv.file() + ":" + std::to_string(line) + ": dangling concept id " +
                                              std::to_string(id));
                    if (it->second.concept_.category != cat)
                        throw ValidationError(csv.file() + ":" + std::to_string(line) + ": concept " +
                                              std::to_string(id) + " is not a " + std::string(to_string(cat)));
                    raw.full_ids.push_back(id);
                }
            }

            for (std::size_t m = 0; m < kMaskColumns.size(); ++m) {
                const auto cat = kMaskColumns[m].second;
                for (const auto& rel : split(row[mask_cols[m]], ';')) {
                    const auto path = root / rel;
                    if (!std::filesystem::is_regular_file(path))
                        throw ValidationError(csv.file() + ":" + std::to_string(line) + ": missing mask file " + rel);
                    const auto mask = read_png_gray16(path);
                    if (mask.width != rec.width || mask.height != rec.height)
                        throw ValidationError(csv.file() + ":" + std::to_string(line) + ": mask " + rel + " is " +
                                              std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                                              ", expected " + std::to_string(rec.width) + "x" +
                                              std::to_string(rec.height));
                    std::uint16_t last = 0;
                    for (auto v : mask.pixels) {
                        if (v == 0 || v == last) continue;
                        last = v;
                        const auto it = labels.find(v);
                        if (it == labels.end())
                            throw ValidationError(rel + ": dangling concept id " + std::to_string(v));
                        if (it->second.concept_.category != cat)
                            throw ValidationError(rel + ": concept " + std::to_string(v) + " is not a " +
                                                  std::string(to_string(cat)));
                        raw.pixel_ids.insert(v);
                    }
                    rec.pixel_masks.push_back({cat, rel});
                }
            }
            std::sort(raw.full_ids.begin(), raw.full_ids.end());
            raw.full_ids.erase(std::unique(raw.full_ids.begin(), raw.full_ids.end()), raw.full_ids.end());
            raw_images.push_back(std::move(raw));
        });
    }

    // Sample counts: images carrying the label.
    std::map<int, int> counted;
    for (const auto& raw : raw_images) {
        for (int id : raw.full_ids) ++counted[id];
        for (int id : raw.pixel_ids) ++counted[id];
    }
    std::set<int> retained;
    for (auto& [id, raw] : labels) {
        raw.concept_.sample_count = counted.count(id) ? counted[id] : 0;
        if (raw.concept_.sample_count != raw.declared_samples)
            index.report_.warnings.push_back("label " + std::to_string(id) + " (" + raw.concept_.name +
                                             ") declares " + std::to_string(raw.declared_samples) +
                                             " samples, counted " + std::to_string(raw.concept_.sample_count));
        if (raw.concept_.sample_count < options.min_samples) {
            index.report_.dropped.push_back(raw.concept_);
            continue;
        }
        retained.insert(id);
        index.concept_pos_[id] = index.concepts_.size();
        index.concepts_.push_back(raw.concept_);
    }
    if (!index.report_.dropped.empty())
        log_info("dropped " + std::to_string(index.report_.dropped.size()) + " concepts with fewer than " +
                 std::to_string(options.min_samples) + " samples");

    index.images_.reserve(raw_images.size());
    for (auto& raw : raw_images) {
        auto& rec = raw.record;
        for (int id : raw.full_ids) {
            if (!retained.count(id)) continue;
            rec.fullimage_labels.push_back(id);
            rec.category_present.insert(labels.at(id).concept_.category);
        }
        for (int id : raw.pixel_ids) {
            if (!retained.count(id)) continue;
            rec.pixel_labels.push_back(id);
            rec.category_present.insert(labels.at(id).concept_.category);
        }
        index.image_pos_[rec.image_id] = index.images_.size();
        index.images_.push_back(std::move(rec));
    }
    return index;
}

const Concept* DatasetIndex::find_concept(int concept_id) const noexcept {
    const auto it = concept_pos_.find(concept_id);
    return it == concept_pos_.end() ? nullptr : &concepts_[it->second];
}

const Concept* DatasetIndex::find_concept(Category category, std::string_view name) const noexcept {
    for (const auto& c : concepts_)
        if (c.category == category && c.name == name) return &c;
    return nullptr;
}

const ImageRecord* DatasetIndex::find_image(std::string_view image_id) const noexcept {
    const auto it = image_pos_.find(std::string(image_id));
    return it == image_pos_.end() ? nullptr : &images_[it->second];
}

std::array<int, kCategoryCount> DatasetIndex::category_counts() const noexcept {
    std::array<int, kCategoryCount> counts{};
    for (const auto& c : concepts_) ++counts[index_of(c.category)];
    return counts;
}

ConceptMask DatasetIndex::concept_mask(std::string_view image_id, int concept_id) const {
    const auto* image = find_image(image_id);
    if (!image) throw UsageError("unknown image " + std::string(image_id));
    const auto* concept_ = find_concept(concept_id);
    if (!concept_) throw UsageError("unknown concept " + std::to_string(concept_id));

    ConceptMask out{concept_id, Bitmask(image->width, image->height)};
    if (is_full_image(concept_->category)) {
        if (std::binary_search(image->fullimage_labels.begin(), image->fullimage_labels.end(), concept_id))
            out.bitmap.fill();
        return out;
    }
    if (!std::binary_search(image->pixel_labels.begin(), image->pixel_labels.end(), concept_id)) return out;
    for (const auto& ref : image->pixel_masks) {
        if (ref.category != concept_->category) continue;
        const auto mask = read_png_gray16(root_ / ref.path);
        for (std::size_t i = 0; i < mask.pixels.size(); ++i)
            if (mask.pixels[i] == concept_id) out.bitmap.set(i);
    }
    return out;
}

ImageLabels DatasetIndex::decode_labels(const ImageRecord& image) const {
    ImageLabels out;
    out.full_image = image.fullimage_labels;
    out.pixel.reserve(image.pixel_labels.size());
    for (int id : image.pixel_labels) out.pixel.push_back({id, Bitmask(image.width, image.height)});
    if (image.pixel_labels.empty()) return out;

    const auto& ids = image.pixel_labels;
    for (const auto& ref : image.pixel_masks) {
        const auto mask = read_png_gray16(root_ / ref.path);
        if (mask.width != image.width || mask.height != image.height)
            throw ValidationError("mask " + ref.path + " changed size since load");
        std::uint16_t last_value = 0;
        std::ptrdiff_t last_slot = -1;
        for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
            const auto v = mask.pixels[i];
            if (v == 0) continue;
            if (v != last_value) {
                last_value = v;
                const auto it = std::lower_bound(ids.begin(), ids.end(), static_cast<int>(v));
                last_slot = (it != ids.end() && *it == v) ? it - ids.begin() : -1;
            }
            if (last_slot >= 0) out.pixel[static_cast<std::size_t>(last_slot)].bitmap.set(i);
        }
    }
    return out;
}

std::string DatasetIndex::serialize() const {
    nlohmann::ordered_json j;
    j["root"] = root_.string();
    auto& concepts = j["concepts"] = nlohmann::ordered_json::array();
    for (const auto& c : concepts_)
        concepts.push_back({{"id", c.id}, {"name", c.name}, {"category", to_string(c.category)},
                            {"sample_count", c.sample_count}});
    auto& images = j["images"] = nlohmann::ordered_json::array();
    for (const auto& im : images_) {
        nlohmann::ordered_json masks = nlohmann::ordered_json::array();
        for (const auto& m : im.pixel_masks) masks.push_back({to_string(m.category), m.path});
        nlohmann::ordered_json present = nlohmann::ordered_json::array();
        for (auto cat : kAllCategories)
            if (im.category_present.contains(cat)) present.push_back(to_string(cat));
        images.push_back({{"image_id", im.image_id},
                          {"width", im.width},
                          {"height", im.height},
                          {"split", im.split == Split::train ? "train" : "val"},
                          {"pixel_masks", masks},
                          {"fullimage_labels", im.fullimage_labels},
                          {"pixel_labels", im.pixel_labels},
                          {"category_present", present}});
    }
    auto& dropped = j["dropped"] = nlohmann::ordered_json::array();
    for (const auto& c : report_.dropped) dropped.push_back(c.id);
    return j.dump(1);
}

// ---------------------------------------------------------------------------

ColorTable::ColorTable(int levels) : levels_(levels) {
    if (levels < 1 || levels > 256) throw UsageError("color table levels must be in 1..256");
}

void ColorTable::set(int r, int g, int b, int color_index) {
    if (r < 0 || g < 0 || b < 0 || r >= levels_ || g >= levels_ || b >= levels_)
        throw UsageError("color bin out of range");
    if (color_index < 0 || color_index >= static_cast<int>(kColorCount))
        throw UsageError("color index out of range");
    entries_[key(r, g, b)] = color_index;
}

std::optional<int> ColorTable::find(int r, int g, int b) const {
    const auto it = entries_.find(key(r, g, b));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

int ColorTable::lookup(std::uint8_t r, std::uint8_t g, std::uint8_t b, bool* fell_back) const {
    const int rb = r * levels_ / 256, gb = g * levels_ / 256, bb = b * levels_ / 256;
    if (fell_back) *fell_back = false;
    if (auto hit = find(rb, gb, bb)) return *hit;
    if (entries_.empty()) throw UsageError("empty color table");
    if (fell_back) *fell_back = true;
    // Nearest key; ties broken by smallest key for determinism.
    long best_d = std::numeric_limits<long>::max();
    int best_key = 0, best_color = 0;
    for (const auto& [k, color] : entries_) {
        const int kr = k / (levels_ * levels_), kg = (k / levels_) % levels_, kb = k % levels_;
        const long d = long(kr - rb) * (kr - rb) + long(kg - gb) * (kg - gb) + long(kb - bb) * (kb - bb);
        if (d < best_d || (d == best_d && k < best_key)) {
            best_d = d;
            best_key = k;
            best_color = color;
        }
    }
    return best_color;
}

ColorTable load_color_table(const std::filesystem::path& path, int levels) {
    ColorTable table(levels);
    CsvReader csv(path);
    const auto cr = csv.column("r"), cg = csv.column("g"), cb = csv.column("b"), cc = csv.column("color_id");
    csv.for_each([&](const std::vector<std::string>& row, std::size_t line) {
        const auto r = parse_int(row[cr], csv.file(), line);
        const auto g = parse_int(row[cg], csv.file(), line);
        const auto b = parse_int(row[cb], csv.file(), line);
        const auto c = parse_int(row[cc], csv.file(), line);
        if (r < 0 || g < 0 || b < 0 || r >= levels || g >= levels || b >= levels)
            throw ParseError(csv.file(), line, "color bin out of range");
        if (c < 0 || c >= static_cast<long long>(kColorCount))
            throw ParseError(csv.file(), line, "color_id must be in 0..10");
        table.set(static_cast<int>(r), static_cast<int>(g), static_cast<int>(b), static_cast<int>(c));
    });
    return table;
}

ColorAnnotation annotate_colors(const RgbImage& image, const ColorTable& table) {
    ColorAnnotation out;
    out.masks.reserve(kColorCount);
    for (std::size_t c = 0; c < kColorCount; ++c)
        out.masks.push_back({static_cast<int>(c), Bitmask(image.width, image.height)});
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const auto* px = image.at(y, x);
            bool fell_back = false;
            const int color = table.lookup(px[0], px[1], px[2], &fell_back);
            if (fell_back) ++out.fallback_pixels;
            out.masks[static_cast<std::size_t>(color)].bitmap.set(y, x);
        }
    }
    if (out.fallback_pixels > 0)
        log_warning(std::to_string(out.fallback_pixels) + " pixels used nearest-key color fallback");
    return out;
}

}  // namespace netdissect
