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

#include <cmath>
#include <fstream>
#include <numbers>

#include "doctest.h"

#include "fixtures.hpp"
#include "netdissect/errors.hpp"
#include "netdissect/rotation.hpp"

using namespace netdissect;
using namespace netdissect::testing;

namespace {

RotationMatrix wrap(Eigen::MatrixXd q) {
    RotationMatrix r;
    r.d = static_cast<int>(q.rows());
    r.q = std::move(q);
    return r;
}

double max_abs_diff(const ActivationVolume& a, const ActivationVolume& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.values[i]) - b.values[i]));
    return m;
}

MemorySource small_store(int units, std::uint64_t seed) {
    const auto d = random_dataset(seed, 6, 16, 16);
    return random_store(d, units, 3, 3, seed);
}

}  // namespace

TEST_CASE("SO(1) has one element") {
    const auto r = sample_rotation(1, 7);
    CHECK(r.d == 1);
    CHECK(r.q(0, 0) == 1.0);
    CHECK_THROWS_AS(sample_rotation(0, 1), UsageError);
}

TEST_CASE("sampled rotations are orthogonal with unit determinant") {
    for (int d : {2, 3, 16, 64}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto r = sample_rotation(d, seed);
            CHECK(orthogonality_error(r.q) <= 1e-10);
            CHECK(std::abs(r.q.determinant() - 1) <= 1e-10);
            CHECK(r.seed == seed);
            CHECK(r.alpha == 1);
        }
    }
}

TEST_CASE("sampling is deterministic per seed") {
    CHECK(sample_rotation(16, 3).q == sample_rotation(16, 3).q);
    CHECK(sample_rotation(16, 3).q != sample_rotation(16, 4).q);
}

TEST_CASE("sampled traces average near zero") {
    // E[tr Q] = 0 and Var = 1 under the Haar measure on SO(d), d >= 2.
    double sum = 0;
    const int n = 400;
    for (int s = 0; s < n; ++s) sum += sample_rotation(3, static_cast<std::uint64_t>(s)).q.trace();
    CHECK(std::abs(sum / n) < 0.2);
}

TEST_CASE("endpoints of the geodesic") {
    const GeodesicPath path(sample_rotation(16, 9));
    const auto zero = path.power(0);
    CHECK(zero.q == Eigen::MatrixXd::Identity(16, 16));
    CHECK(zero.alpha == 0);
    CHECK(zero.seed == 9);
    CHECK((path.power(1).q - path.base().q).norm() <= 1e-8);
    CHECK(path.reconstruction_error() <= 1e-8);
    CHECK(orthogonality_error(path.schur_basis()) <= 1e-10);
    CHECK_THROWS_AS(path.power(-0.1), UsageError);
    CHECK_THROWS_AS(path.power(1.5), UsageError);
}

TEST_CASE("half of a quarter turn in the plane") {
    Eigen::MatrixXd q(2, 2);
    q << 0, -1, 1, 0;
    const auto half = GeodesicPath(wrap(q)).power(0.5).q;
    const double h = std::sqrt(2.0) / 2;
    Eigen::MatrixXd expected(2, 2);
    expected << h, -h, h, h;
    CHECK((half - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("paired -1 eigenvalues form a half-turn plane") {
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(3, 3);
    q(0, 0) = q(1, 1) = -1;
    const GeodesicPath path(wrap(q));
    REQUIRE(path.planes().size() == 1);
    CHECK(std::abs(std::abs(path.planes()[0].theta) - std::numbers::pi) < 1e-12);
    const auto half = path.power(0.5).q;
    CHECK(orthogonality_error(half) <= 1e-12);
    CHECK(std::abs(half.determinant() - 1) <= 1e-12);
    CHECK((half * half - q).norm() <= 1e-12);

    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(3, 3);
    bad(0, 0) = -1;
    CHECK_THROWS_AS(GeodesicPath{wrap(bad)}, ValidationError);
}

TEST_CASE("fractional powers compose and stay in SO(d)") {
    for (int d : {2, 5, 16, 64}) {
        CAPTURE(d);
        const GeodesicPath path(sample_rotation(d, 100 + static_cast<std::uint64_t>(d)));
        for (double a1 : {0.0, 0.1, 0.25, 0.5}) {
            for (double a2 : {0.0, 0.3, 0.5}) {
                const Eigen::MatrixXd lhs = path.power(a1).q * path.power(a2).q;
                CHECK((lhs - path.power(a1 + a2).q).norm() <= 1e-6);
            }
        }
        for (double a = 0; a <= 1.0; a += 0.125) {
            const auto p = path.power(a).q;
            CHECK(orthogonality_error(p) <= 1e-8);
            CHECK(std::abs(p.determinant() - 1) <= 1e-8);
        }
    }
}

TEST_CASE("rotation files round trip bit for bit") {
    TempDir dir;
    const auto r = sample_rotation(8, 5);
    write_rotation(r, dir / "q.bin");
    CHECK(std::filesystem::file_size(dir / "q.bin") == 8 + 64 * 8);
    const auto back = read_rotation(dir / "q.bin");
    CHECK(back.d == 8);
    CHECK(back.q == r.q);
    std::filesystem::resize_file(dir / "q.bin", 100);
    CHECK_THROWS_AS(read_rotation(dir / "q.bin"), ValidationError);
    CHECK_THROWS_AS(read_rotation(dir / "none.bin"), ValidationError);
}

TEST_CASE("identity rotation leaves the store unchanged") {
    const auto src = small_store(4, 1);
    const RotatedSource rotated(src, wrap(Eigen::MatrixXd::Identity(4, 4)));
    for (std::size_t i = 0; i < src.size(); ++i) CHECK(max_abs_diff(rotated.read(i), src.volume(i)) <= 1e-6);
}

TEST_CASE("a permutation swaps unit maps exactly") {
    const auto src = small_store(3, 2);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(3, 3);
    p(0, 1) = p(1, 0) = 1;
    p(2, 2) = 1;
    const RotatedSource rotated(src, wrap(p));
    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto v = rotated.read(i);
        const auto& o = src.volume(i);
        CHECK(std::equal(v.unit(0).begin(), v.unit(0).end(), o.unit(1).begin()));
        CHECK(std::equal(v.unit(1).begin(), v.unit(1).end(), o.unit(0).begin()));
        CHECK(std::equal(v.unit(2).begin(), v.unit(2).end(), o.unit(2).begin()));
    }
}

TEST_CASE("two half rotations equal one full rotation") {
    const auto src = small_store(16, 3);
    const GeodesicPath path(sample_rotation(16, 3));
    const auto half = path.power(0.5);
    const RotatedSource once(src, path.power(1));
    MemorySource staged(src.meta());
    const RotatedSource first(src, half);
    for (std::size_t i = 0; i < src.size(); ++i) staged.add(first.read(i));
    const RotatedSource twice(staged, half);
    for (std::size_t i = 0; i < src.size(); ++i) CHECK(max_abs_diff(twice.read(i), once.read(i)) <= 1e-5);
}

TEST_CASE("rotation preserves column norms and records provenance") {
    const auto src = small_store(16, 4);
    const auto q = GeodesicPath(sample_rotation(16, 4)).power(0.6);
    const RotatedSource rotated(src, q);
    CHECK(rotated.meta().attributes.at("rotation_seed") == "4");
    CHECK(rotated.meta().attributes.at("rotation_alpha") == "0.6");
    CHECK(rotated.meta().unit_count == 16);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto v = rotated.read(i);
        const auto& o = src.volume(i);
        for (std::size_t p = 0; p < o.plane_size(); ++p) {
            double a = 0, b = 0;
            for (int k = 0; k < 16; ++k) {
                a += static_cast<double>(o.unit(k)[p]) * o.unit(k)[p];
                b += static_cast<double>(v.unit(k)[p]) * v.unit(k)[p];
            }
            CHECK(std::abs(std::sqrt(b) - std::sqrt(a)) <= 1e-5 * std::max(1.0, std::sqrt(a)));
        }
    }
    CHECK_THROWS_AS(RotatedSource(src, sample_rotation(5, 1)), UsageError);
}

TEST_CASE("rotated stores on disk match the in-memory view") {
    TempDir dir;
    const auto src = small_store(8, 6);
    const auto q = sample_rotation(8, 6);
    const RotatedSource view(src, q);
    for (int workers : {1, 4}) {
        const auto out = dir / ("w" + std::to_string(workers));
        rotate_store(src, q, out, workers);
        const auto store = ActivationStore::open(out);
        CHECK(store.meta() == view.meta());
        REQUIRE(store.size() == src.size());
        for (std::size_t i = 0; i < src.size(); ++i) CHECK(store.read(i).values == view.read(i).values);
    }
}

TEST_CASE("rotation sweep") {
    const auto d = random_dataset(51, 10, 24, 24);
    TempDir dir;
    write_dataset(d, dir / "data");
    LoadOptions lo;
    lo.min_samples = 2;
    const auto index = load_index(dir / "data", lo);
    const auto src = random_store(d, 8, 4, 4, 51);
    const std::vector<double> alphas{0.0, 0.5, 1.0};
    const std::vector<std::uint64_t> seeds{2, 1};
    const auto rows = rotation_sweep(src, index, alphas, seeds, 0.02);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].alpha == 0.0);
    CHECK(rows[0].seed == 1);
    CHECK(rows[1].seed == 2);
    CHECK(rows[5].alpha == 1.0);
    const auto plain = dissect(src, index, 0.02);
    CHECK(rows[0].summary == plain.summary);
    CHECK(rows[1].summary == plain.summary);

    write_rotation_sweep_csv(rows, dir / "rotation_sweep.csv");
    std::ifstream in(dir / "rotation_sweep.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "alpha,seed,unique_detectors,total_detectors,ratio");
    int lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == 6);
}
