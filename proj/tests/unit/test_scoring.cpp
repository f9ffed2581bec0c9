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

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"

#include "fixtures.hpp"
#include "netdissect/dataset_index.hpp"
#include "netdissect/errors.hpp"
#include "netdissect/parallel.hpp"
#include "netdissect/scoring.hpp"
#include "netdissect/upsample.hpp"
#include "oracle.hpp"

using namespace netdissect;
using namespace netdissect::testing;

namespace {

template <typename E>
bool nested_is(const std::exception& e) {
    if (dynamic_cast<const E*>(&e)) return true;
    try {
        std::rethrow_if_nested(e);
    } catch (const E&) {
        return true;
    } catch (...) {
    }
    return false;
}

UnitThresholds levels(std::vector<float> t) {
    UnitThresholds u;
    u.levels = std::move(t);
    u.counts.assign(u.levels.size(), 0);
    return u;
}

std::vector<float> random_plane(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<float> dist(-2, 2);
    std::vector<float> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

// One unit, identity geometry: a 0/1 activation plane is its own mask at T = 0.5.
LayerMeta identity_meta(int units = 1) {
    LayerMeta m;
    m.layer_name = "id";
    m.unit_count = units;
    m.rf = RfGeometry{0, 0, 1, 1};
    return m;
}

}  // namespace

TEST_CASE("constant map upsamples to a constant") {
    const std::vector<float> plane(6, 1.75f);
    const auto s = upsample(plane, 2, 3, default_geometry(2, 3, 20, 30), 20, 30);
    CHECK(s.height == 20);
    CHECK(s.width == 30);
    for (double v : s.values) CHECK(v == 1.75);
}

TEST_CASE("1x2 map with stride 4 and offset 2 over 8 pixels") {
    const std::vector<float> plane{0.0f, 1.0f};
    const auto s = upsample(plane, 1, 2, RfGeometry{0, 2, 1, 4}, 1, 8);
    const std::vector<double> expected{0, 0, 0, 0.25, 0.5, 0.75, 1, 1};
    CHECK(s.values == expected);
}

TEST_CASE("2x2 map to 8x8 matches the naive per-pixel reference") {
    std::mt19937_64 rng(1);
    ActivationVolume v("x", 1, 2, 2);
    v.values = random_plane(rng, 4);
    const auto g = default_geometry(2, 2, 8, 8);
    const auto s = upsample(v.unit(0), 2, 2, g, 8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(std::abs(s.at(y, x) - oracle_pixel(v, 0, g, y, x)) <= 1e-6);
}

TEST_CASE("upsampled values stay within the source range") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 1 + trial % 5, w = 2 + trial % 4;
        const auto plane = random_plane(rng, static_cast<std::size_t>(h) * w);
        const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
        const auto s = upsample(plane, h, w, default_geometry(h, w, 37, 29), 37, 29);
        for (double x : s.values) {
            CHECK(x >= *lo);
            CHECK(x <= *hi);
        }
    }
}

TEST_CASE("upsample rejects bad geometry") {
    const std::vector<float> plane(4, 0.0f);
    CHECK_THROWS_AS(upsample(plane, 2, 2, RfGeometry{0, 0, 0, 1}, 4, 4), UsageError);
    CHECK_THROWS_AS(upsample(plane, 2, 2, RfGeometry{0, 0, 1, -1}, 4, 4), UsageError);
    CHECK_THROWS_AS(upsample(plane, 2, 2, RfGeometry{0, 0, 1, 1}, 0, 4), UsageError);
}

TEST_CASE("binarize") {
    std::mt19937_64 rng(3);
    const auto plane = random_plane(rng, 12);
    const auto s = upsample(plane, 3, 4, default_geometry(3, 4, 24, 32), 24, 32);
    const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
    CHECK(binarize(s, *lo - 1).count() == s.values.size());
    CHECK(binarize(s, *lo).count() == s.values.size());
    CHECK(binarize(s, *hi + 1e-9).count() == 0);
    for (double t : {-1.0, 0.0, 0.3, 1.1}) {
        const auto m = binarize(s, t);
        std::size_t expected = 0;
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            expected += s.values[i] >= t;
            CHECK(m.get(i) == (s.values[i] >= t));
        }
        CHECK(m.count() == expected);
    }
}

TEST_CASE("fast thresholding is bit-identical to upsample then binarize") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> off(0, 3), stride(0.5, 6);
    for (int trial = 0; trial < 200; ++trial) {
        const int h = 1 + static_cast<int>(rng() % 6), w = 1 + static_cast<int>(rng() % 6);
        const int th = 1 + static_cast<int>(rng() % 40), tw = 1 + static_cast<int>(rng() % 40);
        auto plane = random_plane(rng, static_cast<std::size_t>(h) * w);
        if (trial % 3 == 0)
            for (auto& x : plane) x = std::round(x);  // ties with the threshold
        const RfGeometry g{off(rng), off(rng), stride(rng), stride(rng)};
        const UpsamplePlan plan(h, w, g, th, tw);
        const double t = trial % 3 == 0 ? std::round(plane[0]) : plane[rng() % plane.size()];
        Bitmask fast;
        threshold_upsampled(plane, plan, t, fast);
        CHECK(fast == binarize(upsample(plane, h, w, g, th, tw), t));
    }
}

TEST_CASE("anchor fit") {
    CHECK(anchors_fit(7, 16, 32, 224));
    CHECK_FALSE(anchors_fit(8, 16, 32, 224));
    CHECK(anchors_fit(1, 0, 1, 1));
}

TEST_CASE("pooled IoU sums counts across images") {
    // A: car covers 6 pixels, M 6 pixels, 4 shared. B: only tree labeled, M 2 pixels.
    SynthDataset d;
    d.concepts = {{1, "car", Category::object}, {2, "tree", Category::object}};
    SynthImage a{"a", 4, 4, Split::train, {}, {}, {}};
    a.planes[Category::object] = {1, 1, 1, 0,  //
                                  1, 1, 1, 0,  //
                                  0, 0, 0, 0,  //
                                  0, 0, 0, 0};
    SynthImage b{"b", 4, 4, Split::train, {}, {}, {}};
    b.planes[Category::object] = std::vector<std::uint16_t>(16, 0);
    b.planes[Category::object][15] = 2;
    d.images = {a, b};
    TempDir dir;
    write_dataset(d, dir.path());
    LoadOptions lo;
    lo.min_samples = 1;
    const auto index = load_index(dir.path(), lo);

    MemorySource src(identity_meta());
    ActivationVolume va("a", 1, 4, 4), vb("b", 1, 4, 4);
    for (int i : {1, 2, 5, 6, 3, 7}) va.values[static_cast<std::size_t>(i)] = 1;
    vb.values[0] = vb.values[1] = 1;
    src.add(va);
    src.add(vb);

    const auto table = accumulate_iou(src, index, levels({0.5f}));
    REQUIRE(table.concept_count() == 2);
    CHECK(table.concepts()[0].name == "car");
    CHECK(table.intersection(0, 0) == 4);
    CHECK(table.union_count(0, 0) == 10);
    CHECK(table.iou(0, 0) == 0.4);
    CHECK(table.images_considered(0) == 2);
    CHECK(table == accumulate_iou_serial(src, index, levels({0.5f})));
}

TEST_CASE("images without the concept's category do not count") {
    // Three images; wood labeled on the first two only. The unit fires everywhere.
    SynthDataset d;
    d.concepts = {{1, "car", Category::object}, {6, "wood", Category::material}};
    for (int i = 0; i < 3; ++i) {
        SynthImage img{"m" + std::to_string(i), 4, 4, Split::train, {}, {}, {}};
        img.planes[Category::object] = std::vector<std::uint16_t>(16, 1);
        if (i < 2) {
            img.planes[Category::material] = std::vector<std::uint16_t>(16, 0);
            img.planes[Category::material][0] = 6;
        }
        d.images.push_back(img);
    }
    TempDir dir;
    write_dataset(d, dir.path());
    LoadOptions lo;
    lo.min_samples = 1;
    const auto index = load_index(dir.path(), lo);

    MemorySource src(identity_meta());
    for (const auto& img : d.images) {
        ActivationVolume v(img.id, 1, 4, 4);
        std::fill(v.values.begin(), v.values.end(), 1.0f);
        src.add(v);
    }
    const auto table = accumulate_iou(src, index, levels({0.5f}));
    const auto wood = 1u;
    REQUIRE(table.concepts()[wood].id == 6);
    CHECK(table.intersection(0, wood) == 2);
    CHECK(table.union_count(0, wood) == 32);
    CHECK(table.images_considered(wood) == 2);

    const auto oracle = brute_force_dissection(d, volumes_of(src), src.meta(), 0.005, 1);
    CHECK(oracle.inter[oracle.cell(0, wood)] == 2);
    CHECK(oracle.uni[oracle.cell(0, wood)] == 32);
}

TEST_CASE("parallel and serial kernels match the brute-force oracle") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        CAPTURE(seed);
        const auto d = random_dataset(seed, 12, 32, 32);
        TempDir dir;
        write_dataset(d, dir.path());
        LoadOptions lo;
        lo.min_samples = 2;
        const auto index = load_index(dir.path(), lo);
        const auto rf = seed == 3 ? std::optional<RfGeometry>(RfGeometry{1.5, 2.5, 9, 9}) : std::nullopt;
        const auto src = random_store(d, 8, 4, 4, seed + 100, seed == 2, rf);
        ThresholdOptions to;
        to.mode = ThresholdMode::exact;
        const auto t = compute_thresholds(src, 0.05, to);

        const auto oracle = brute_force_dissection(d, volumes_of(src), src.meta(), 0.05, 2);
        CHECK(t.levels == oracle.thresholds);

        ScoringOptions so;
        so.workers = 1;
        const auto table = accumulate_iou(src, index, t, so);
        REQUIRE(table.concept_count() == oracle.concept_ids.size());
        for (int u = 0; u < 8; ++u)
            for (std::size_t c = 0; c < table.concept_count(); ++c) {
                CHECK(table.concepts()[c].id == oracle.concept_ids[c]);
                CHECK(table.intersection(u, c) == oracle.inter[oracle.cell(u, c)]);
                CHECK(table.union_count(u, c) == oracle.uni[oracle.cell(u, c)]);
                CHECK(table.images_considered(c) == oracle.images[c]);
            }
        CHECK(accumulate_iou_serial(src, index, t, so) == table);
        for (int workers : {2, 8}) {
            so.workers = workers;
            CHECK(accumulate_iou(src, index, t, so) == table);
        }
    }
}

TEST_CASE("raising a threshold never grows the counts") {
    const auto d = random_dataset(9, 8, 24, 24);
    TempDir dir;
    write_dataset(d, dir.path());
    LoadOptions lo;
    lo.min_samples = 1;
    const auto index = load_index(dir.path(), lo);
    const auto src = random_store(d, 4, 3, 3, 9);
    const std::vector<UnitThresholds> sets{levels({0.0f, 0.0f, 0.0f, 0.0f}), levels({0.5f, 0.5f, 0.5f, 0.5f}),
                                           levels({1.5f, 1.5f, 1.5f, 1.5f})};
    const auto tables = accumulate_iou(src, index, sets);
    for (std::size_t s = 0; s < sets.size(); ++s) CHECK(tables[s] == accumulate_iou(src, index, sets[s]));
    for (std::size_t s = 1; s < tables.size(); ++s)
        for (int u = 0; u < 4; ++u)
            for (std::size_t c = 0; c < tables[s].concept_count(); ++c) {
                CHECK(tables[s].intersection(u, c) <= tables[s - 1].intersection(u, c));
                CHECK(tables[s].union_count(u, c) <= tables[s - 1].union_count(u, c));
            }
}

TEST_CASE("concept subset") {
    const auto d = random_dataset(4, 6, 16, 16);
    TempDir dir;
    write_dataset(d, dir.path());
    LoadOptions lo;
    lo.min_samples = 1;
    const auto index = load_index(dir.path(), lo);
    const auto src = random_store(d, 2, 2, 2, 4);
    const auto t = compute_thresholds(src, 0.1);
    ScoringOptions so;
    so.concept_ids = {2, 7};
    const auto sub = accumulate_iou(src, index, t, so);
    const auto full = accumulate_iou(src, index, t);
    REQUIRE(sub.concept_count() == 2);
    for (std::size_t c = 0; c < 2; ++c) {
        std::size_t pos = 0;
        while (full.concepts()[pos].id != sub.concepts()[c].id) ++pos;
        for (int u = 0; u < 2; ++u) {
            CHECK(sub.intersection(u, c) == full.intersection(u, pos));
            CHECK(sub.union_count(u, c) == full.union_count(u, pos));
        }
    }
    so.concept_ids = {99};
    CHECK_THROWS_AS(accumulate_iou(src, index, t, so), UsageError);
}

TEST_CASE("scoring errors") {
    const auto d = random_dataset(5, 4, 16, 16);
    TempDir dir;
    write_dataset(d, dir.path());
    LoadOptions lo;
    lo.min_samples = 1;
    const auto index = load_index(dir.path(), lo);

    SUBCASE("threshold unit count") {
        const auto src = random_store(d, 3, 2, 2, 5);
        CHECK_THROWS_AS(accumulate_iou(src, index, levels({0, 0})), UsageError);
    }
    SUBCASE("activation grid does not fit the image") {
        const auto src = random_store(d, 1, 2, 2, 5, false, RfGeometry{0, 0, 20, 20});
        try {
            accumulate_iou(src, index, levels({0}));
            FAIL("expected an error");
        } catch (const std::exception& e) {
            CHECK(nested_is<ValidationError>(e));
        }
    }
    SUBCASE("image missing from the index") {
        auto src = random_store(d, 1, 2, 2, 5);
        src.add(ActivationVolume("ghost", 1, 2, 2));
        try {
            accumulate_iou(src, index, levels({0}));
            FAIL("expected an error");
        } catch (const ScanError& e) {
            CHECK(e.image_id() == "ghost");
            CHECK(nested_is<ValidationError>(e));
        }
    }
}

TEST_CASE("IoU table files round trip") {
    const auto d = random_dataset(6, 6, 16, 16);
    TempDir dir;
    write_dataset(d, dir / "data");
    LoadOptions lo;
    lo.min_samples = 1;
    const auto index = load_index(dir / "data", lo);
    const auto src = random_store(d, 3, 2, 2, 6);
    auto table = accumulate_iou(src, index, compute_thresholds(src, 0.1));
    write_iou_cache(table, dir / "iou_cache.bin");
    CHECK(read_iou_cache(dir / "iou_cache.bin") == table);
    write_iou_csv(table, dir / "iou_table.csv");
    const auto back = read_iou_csv(dir / "iou_table.csv", &index);
    for (int u = 0; u < 3; ++u)
        for (std::size_t c = 0; c < table.concept_count(); ++c) {
            CHECK(back.intersection(u, c) == table.intersection(u, c));
            CHECK(back.union_count(u, c) == table.union_count(u, c));
            CHECK(back.concepts()[c].name == table.concepts()[c].name);
        }
    CHECK_THROWS_AS(read_iou_cache(dir / "iou_table.csv"), ParseError);
}

TEST_CASE("number formatting round trips") {
    CHECK(format_number(0.4) == "0.4");
    CHECK(format_number(0) == "0");
    CHECK(format_number(1) == "1");
    for (double x : {1.0 / 3, 0.1 + 0.2, 1e-300, 123456.789})
        CHECK(std::stod(format_number(x)) == x);
}
