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
#include "netdissect/errors.hpp"
#include "netdissect/quantile_sketch.hpp"
#include "netdissect/thresholds.hpp"
#include "oracle.hpp"

using namespace netdissect;
using namespace netdissect::testing;

namespace {

LayerMeta meta_of(int k) {
    LayerMeta m;
    m.layer_name = "l";
    m.unit_count = k;
    return m;
}

// Values laid out as `images` volumes of one row each.
MemorySource single_unit(const std::vector<float>& values, int per_image) {
    MemorySource src(meta_of(1));
    for (std::size_t i = 0, n = 0; i < values.size(); i += static_cast<std::size_t>(per_image), ++n) {
        const int w = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(per_image), values.size() - i));
        ActivationVolume v("i" + std::to_string(n), 1, 1, w);
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(i), w, v.values.begin());
        src.add(std::move(v));
    }
    return src;
}

std::vector<float> unit_samples(const MemorySource& src, int unit) {
    std::vector<float> all;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto span = src.volume(i).unit(unit);
        all.insert(all.end(), span.begin(), span.end());
    }
    return all;
}

ThresholdOptions exact(int workers = 1) {
    ThresholdOptions o;
    o.mode = ThresholdMode::exact;
    o.workers = workers;
    return o;
}

}  // namespace

TEST_CASE("default tau") { CHECK(kDefaultTau == 0.005); }

TEST_CASE("1..1000 at tau 0.005 gives 995") {
    std::vector<float> v(1000);
    for (int i = 0; i < 1000; ++i) v[static_cast<std::size_t>(i)] = static_cast<float>(i + 1);
    std::shuffle(v.begin(), v.end(), std::mt19937_64(3));
    const auto src = single_unit(v, 37);
    const auto t = compute_thresholds(src, 0.005, exact());
    CHECK(t.levels[0] == 995.0f);
    CHECK(t.levels[0] == oracle_threshold(v, 0.005));
    CHECK(t.counts[0] == 1000);
    CHECK(t.mode == ThresholdMode::exact);
    CHECK(fraction_above(src, t, 1)[0] == 5.0 / 1000);
}

TEST_CASE("constant activations") {
    const auto src = single_unit(std::vector<float>(500, 2.5f), 50);
    const auto t = compute_thresholds(src, 0.005, exact());
    CHECK(t.levels[0] == 2.5f);
    CHECK(fraction_above(src, t, 1)[0] == 0.0);
}

TEST_CASE("allowed count tolerates tau*n rounding below an integer") {
    CHECK(allowed_above(0.005, 1000) == 5);
    CHECK(allowed_above(0.29, 100) == 29);  // 0.29 * 100 = 28.999999999999996
    CHECK(allowed_above(0.5, 3) == 1);
    CHECK(allowed_above(0.005, 199) == 0);
}

TEST_CASE("exact mode matches the sort oracle on random and tied stores") {
    for (bool quantized : {false, true}) {
        CAPTURE(quantized);
        const auto d = random_dataset(11, 12, 24, 24);
        const auto src = random_store(d, 6, 5, 5, 12, quantized);
        for (double tau : {0.0025, 0.005, 0.05, 0.2, 0.5}) {
            CAPTURE(tau);
            const auto t = compute_thresholds(src, tau, exact(2));
            for (int k = 0; k < 6; ++k) {
                const auto samples = unit_samples(src, k);
                CHECK(t.levels[static_cast<std::size_t>(k)] == oracle_threshold(samples, tau));
                const auto above = std::count_if(samples.begin(), samples.end(),
                                                 [&](float a) { return a > t.levels[static_cast<std::size_t>(k)]; });
                CHECK(static_cast<double>(above) <= std::floor(tau * static_cast<double>(samples.size()) + 1e-9));
            }
        }
    }
}

TEST_CASE("distinct values land within one sample of tau") {
    const auto d = random_dataset(5, 10, 16, 16);
    const auto src = random_store(d, 4, 7, 7, 6);
    const auto t = compute_thresholds(src, 0.01, exact());
    const auto n = static_cast<double>(t.counts[0]);
    for (double f : fraction_above(src, t, 1)) {
        CHECK(f <= 0.01);
        CHECK(f >= 0.01 - 1.0 / n);
    }
}

TEST_CASE("multi-tau pass equals single-tau runs and is monotone") {
    const auto d = random_dataset(13, 10, 20, 20);
    const auto src = random_store(d, 5, 6, 6, 14, true);
    const std::vector<double> taus{0.0025, 0.005, 0.01, 0.02, 0.04};
    for (auto mode : {ThresholdMode::exact, ThresholdMode::sketch}) {
        ThresholdOptions o;
        o.mode = mode;
        o.workers = 2;
        const auto all = compute_thresholds(src, taus, o);
        REQUIRE(all.size() == taus.size());
        for (std::size_t i = 0; i < taus.size(); ++i) {
            CHECK(all[i] == compute_thresholds(src, taus[i], o));
            if (i > 0 && mode == ThresholdMode::exact)
                for (std::size_t k = 0; k < all[i].units(); ++k) CHECK(all[i - 1].levels[k] >= all[i].levels[k]);
        }
    }
}

TEST_CASE("results do not depend on the worker count") {
    const auto d = random_dataset(17, 16, 16, 16);
    const auto src = random_store(d, 8, 4, 4, 18);
    for (auto mode : {ThresholdMode::exact, ThresholdMode::sketch}) {
        ThresholdOptions o;
        o.mode = mode;
        o.epsilon = 0.01;
        o.workers = 1;
        const auto one = compute_thresholds(src, 0.005, o);
        o.workers = 8;
        CHECK(compute_thresholds(src, 0.005, o) == one);
    }
}

TEST_CASE("sketch mode on a million samples stays within epsilon") {
    std::mt19937_64 rng(21);
    std::lognormal_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> v(1000000);
    for (auto& x : v) x = dist(rng);
    const auto src = single_unit(v, 1000);
    ThresholdOptions o;
    o.mode = ThresholdMode::sketch;
    o.epsilon = 1e-4;
    o.workers = 4;
    const auto t = compute_thresholds(src, 0.005, o);
    CHECK(t.mode == ThresholdMode::sketch);
    CHECK(t.epsilon == 1e-4);
    const double f = fraction_above(src, t, 2)[0];
    CHECK(std::abs(f - 0.005) <= 1e-4 + 1e-6);
}

TEST_CASE("automatic mode picks exact for small stores") {
    const auto d = random_dataset(1, 4, 8, 8);
    const auto src = random_store(d, 2, 2, 2, 1);
    const auto t = compute_thresholds(src, 0.005);
    CHECK(t.mode == ThresholdMode::exact);
    CHECK(t.epsilon == 0);
}

TEST_CASE("argument errors") {
    const auto d = random_dataset(1, 4, 8, 8);
    const auto src = random_store(d, 2, 2, 2, 1);
    CHECK_THROWS_AS(compute_thresholds(src, 0.0), UsageError);
    CHECK_THROWS_AS(compute_thresholds(src, 0.6), UsageError);
    CHECK_THROWS_AS(compute_thresholds(MemorySource(meta_of(2)), 0.005), UsageError);
    auto t = compute_thresholds(src, 0.005);
    t.levels.push_back(0);
    t.counts.push_back(0);
    CHECK_THROWS_AS(fraction_above(src, t), UsageError);
}

TEST_CASE("thresholds.json round trip") {
    TempDir dir;
    const auto d = random_dataset(2, 6, 8, 8);
    const auto src = random_store(d, 3, 3, 3, 2);
    ThresholdOptions o;
    o.mode = ThresholdMode::sketch;
    o.epsilon = 0.001;
    const auto t = compute_thresholds(src, 0.04, o);
    write_thresholds_json(t, dir / "thresholds.json");
    CHECK(read_thresholds_json(dir / "thresholds.json") == t);
    CHECK_THROWS_AS(read_thresholds_json(dir / "missing.json"), ParseError);
}

TEST_CASE("sketch rank error stays under its certified bound") {
    std::mt19937_64 rng(8);
    std::normal_distribution<float> dist;
    std::vector<float> v(200000);
    for (auto& x : v) x = dist(rng);
    QuantileSketch a(64), b(64);
    for (std::size_t i = 0; i < v.size(); ++i) (i % 3 ? a : b).insert(v[i]);
    a.merge(b);
    CHECK(a.count() == v.size());
    CHECK(a.retained() < v.size() / 50);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (float probe : {-2.0f, -0.5f, 0.0f, 1.0f, 2.5f}) {
        const auto truth = static_cast<std::uint64_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), probe));
        const auto est = a.count_greater(probe);
        CHECK((est > truth ? est - truth : truth - est) <= a.rank_error_bound());
    }
}

TEST_CASE("sketch capacity honors half of epsilon times n") {
    const std::uint64_t n = 1000000;
    const auto cap = QuantileSketch::capacity_for(1e-3, n);
    QuantileSketch s(cap);
    for (std::uint64_t i = 0; i < n; ++i) s.insert(static_cast<float>(i));
    CHECK(static_cast<double>(s.rank_error_bound()) <= 1e-3 * n / 2);
    CHECK_THROWS_AS(QuantileSketch::capacity_for(0, n), UsageError);
    CHECK_THROWS_AS(QuantileSketch(1), UsageError);
    CHECK_THROWS_AS(QuantileSketch(4).upper_threshold(0.1), UsageError);
}
