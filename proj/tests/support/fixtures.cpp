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

#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include <unistd.h>

#include "netdissect/png_io.hpp"

namespace netdissect::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    for (;;) {
        path_ = fs::temp_directory_path() /
                ("netdissect-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
                 std::to_string(rd() % 100000));
        if (fs::create_directories(path_)) return;
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

const SynthConcept& SynthDataset::concept_by_id(int id) const {
    for (const auto& c : concepts)
        if (c.id == id) return c;
    throw std::out_of_range("no concept " + std::to_string(id));
}

int SynthDataset::samples(int id) const {
    int n = 0;
    for (const auto& img : images) {
        bool found = std::count(img.scene.begin(), img.scene.end(), id) + std::count(img.texture.begin(), img.texture.end(), id) > 0;
        for (const auto& [cat, plane] : img.planes)
            if (std::find(plane.begin(), plane.end(), id) != plane.end()) found = true;
        n += found;
    }
    return n;
}

namespace {

const char* mask_column(Category c) {
    switch (c) {
        case Category::object: return "object_masks";
        case Category::part: return "part_masks";
        case Category::material: return "material_masks";
        case Category::color: return "color_masks";
        default: throw std::invalid_argument("not a pixel category");
    }
}

std::string join_ids(const std::vector<int>& ids) {
    std::string s;
    for (int id : ids) s += (s.empty() ? "" : ";") + std::to_string(id);
    return s;
}

}  // namespace

void write_dataset(const SynthDataset& d, const fs::path& root, const std::map<int, int>& declared_override) {
    fs::create_directories(root / "masks");
    {
        std::ofstream f(root / "category.csv");
        f << "category,count\n";
        for (auto cat : kAllCategories) {
            int n = 0;
            for (const auto& c : d.concepts) n += c.category == cat;
            f << to_string(cat) << ',' << n << '\n';
        }
    }
    {
        std::ofstream f(root / "label.csv");
        f << "id,name,category,sample_count\n";
        for (const auto& c : d.concepts) {
            const auto it = declared_override.find(c.id);
            f << c.id << ',' << c.name << ',' << to_string(c.category) << ','
              << (it != declared_override.end() ? it->second : d.samples(c.id)) << '\n';
        }
    }
    std::ofstream f(root / "index.csv");
    f << "image_id,width,height,split,scene,texture,object_masks,part_masks,material_masks,color_masks\n";
    for (const auto& img : d.images) {
        std::map<std::string, std::string> cols;
        for (const auto& [cat, plane] : img.planes) {
            const std::string rel = "masks/" + img.id + "_" + std::string(to_string(cat)) + ".png";
            write_png_gray16(root / rel, img.width, img.height, plane);
            cols[mask_column(cat)] = rel;
        }
        f << img.id << ',' << img.width << ',' << img.height << ',' << (img.split == Split::train ? "train" : "val")
          << ',' << join_ids(img.scene) << ',' << join_ids(img.texture) << ',' << cols["object_masks"] << ','
          << cols["part_masks"] << ',' << cols["material_masks"] << ',' << cols["color_masks"] << '\n';
    }
}

SynthDataset random_dataset(std::uint64_t seed, int images, int width, int height) {
    SynthDataset d;
    d.concepts = {{1, "car", Category::object},      {2, "tree", Category::object},
                  {3, "person", Category::object},   {4, "wheel", Category::part},
                  {5, "head", Category::part},       {6, "wood", Category::material},
                  {7, "street", Category::scene},    {8, "striped", Category::texture}};
    std::mt19937_64 rng(seed);
    auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto chance = [&](double p) { return std::bernoulli_distribution(p)(rng); };
    auto paint = [&](std::vector<std::uint16_t>& plane, int id) {
        const int h = uniform(height / 5, height / 2), w = uniform(width / 5, width / 2);
        const int y0 = uniform(0, height - h), x0 = uniform(0, width - w);
        for (int y = y0; y < y0 + h; ++y)
            for (int x = x0; x < x0 + w; ++x) plane[static_cast<std::size_t>(y) * width + x] = static_cast<std::uint16_t>(id);
    };
    const auto pixels = static_cast<std::size_t>(width) * height;
    for (int i = 0; i < images; ++i) {
        SynthImage img;
        char name[32];
        std::snprintf(name, sizeof name, "img%04d", i);
        img.id = name;
        img.width = width;
        img.height = height;
        img.split = i % 5 == 4 ? Split::val : Split::train;
        if (chance(0.85)) {
            auto& plane = img.planes[Category::object];
            plane.assign(pixels, 0);
            for (int r = uniform(1, 3); r > 0; --r) paint(plane, uniform(1, 3));
        }
        if (chance(0.5)) {
            auto& plane = img.planes[Category::part];
            plane.assign(pixels, 0);
            for (int r = uniform(1, 2); r > 0; --r) paint(plane, uniform(4, 5));
        }
        if (chance(0.5)) {
            auto& plane = img.planes[Category::material];
            plane.assign(pixels, 0);
            paint(plane, 6);
        }
        if (chance(0.6)) img.scene.push_back(7);
        if (chance(0.4)) img.texture.push_back(8);
        d.images.push_back(std::move(img));
    }
    return d;
}

MemorySource random_store(const SynthDataset& d, int units, int act_height, int act_width, std::uint64_t seed,
                          bool quantized, std::optional<RfGeometry> rf) {
    LayerMeta meta;
    meta.layer_name = "synthetic";
    meta.unit_count = units;
    meta.rf = rf;
    meta.source_model = "fixture";
    MemorySource source(meta);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.35);
    for (const auto& img : d.images) {
        ActivationVolume v(img.id, units, act_height, act_width);
        for (int k = 0; k < units; ++k) {
            const auto& target = d.concepts[static_cast<std::size_t>(k) % d.concepts.size()];
            const bool whole = is_full_image(target.category);
            const bool tagged = whole && (std::count(img.scene.begin(), img.scene.end(), target.id) +
                                              std::count(img.texture.begin(), img.texture.end(), target.id) >
                                          0);
            const auto plane_it = img.planes.find(target.category);
            for (int i = 0; i < act_height; ++i)
                for (int j = 0; j < act_width; ++j) {
                    double cover = tagged ? 1.0 : 0.0;
                    if (!whole && plane_it != img.planes.end()) {
                        const int y0 = i * img.height / act_height, y1 = (i + 1) * img.height / act_height;
                        const int x0 = j * img.width / act_width, x1 = (j + 1) * img.width / act_width;
                        int hit = 0;
                        for (int y = y0; y < y1; ++y)
                            for (int x = x0; x < x1; ++x)
                                hit += plane_it->second[static_cast<std::size_t>(y) * img.width + x] == target.id;
                        cover = static_cast<double>(hit) / ((y1 - y0) * (x1 - x0));
                    }
                    double value = 2.0 * cover + noise(rng);
                    if (quantized) value = std::round(value * 4) / 4;
                    v.at(k, i, j) = static_cast<float>(value);
                }
        }
        source.add(std::move(v));
    }
    return source;
}

std::vector<ActivationVolume> volumes_of(const MemorySource& source) {
    std::vector<ActivationVolume> out;
    for (std::size_t i = 0; i < source.size(); ++i) out.push_back(source.volume(i));
    return out;
}

}  // namespace netdissect::testing
