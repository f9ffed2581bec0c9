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

#include "netdissect/rotation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "netdissect/errors.hpp"
#include "netdissect/parallel.hpp"
#include "netdissect/scoring.hpp"

namespace netdissect {

namespace {

constexpr double kUnitTolerance = 1e-10;

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i, v >>= 8) r = (r << 8) | (v & 0xff);
        return r;
    } else {
        return v;
    }
}

}  // namespace

RotationMatrix sample_rotation(int d, std::uint64_t seed) {
    if (d < 1) throw UsageError("rotation dimension must be at least 1");
    RotationMatrix out;
    out.d = d;
    out.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (;;) {
        Eigen::MatrixXd a(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) a(i, j) = normal(rng);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
        const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        const auto diag = r.diagonal().cwiseAbs();
        if (diag.minCoeff() < 1e-10 * diag.maxCoeff()) continue;  // numerically rank deficient; redraw

        Eigen::MatrixXd q = qr.householderQ();
        for (int j = 0; j < d; ++j)
            if (r(j, j) < 0) q.col(j) = -q.col(j);
        if (q.determinant() < 0) q.col(d - 1) = -q.col(d - 1);
        out.q = std::move(q);
        return out;
    }
}

double orthogonality_error(const Eigen::MatrixXd& q) {
    return (q.transpose() * q - Eigen::MatrixXd::Identity(q.rows(), q.cols())).norm();
}

GeodesicPath::GeodesicPath(const RotationMatrix& q) : base_(q) {
    const int d = q.d;
    if (q.q.rows() != d || q.q.cols() != d) throw UsageError("rotation matrix is not d x d");
    Eigen::RealSchur<Eigen::MatrixXd> schur(q.q);
    if (schur.info() != Eigen::Success) throw ValidationError("real Schur decomposition did not converge");
    u_ = schur.matrixU();
    const Eigen::MatrixXd& t = schur.matrixT();

    std::vector<int> negatives;
    for (int i = 0; i < d;) {
        if (i + 1 < d && t(i + 1, i) != 0.0) {
            const double s = (t(i + 1, i) - t(i, i + 1)) / 2;
            const double c = (t(i, i) + t(i + 1, i + 1)) / 2;
            planes_.push_back({i, i + 1, std::atan2(s, c)});
            i += 2;
            continue;
        }
        if (std::abs(t(i, i) - 1) <= kUnitTolerance) {
            // fixed axis
        } else if (std::abs(t(i, i) + 1) <= kUnitTolerance) {
            negatives.push_back(i);
        } else {
            throw ValidationError("Schur scalar " + std::to_string(t(i, i)) + " is not +-1; input is not a rotation");
        }
        ++i;
    }
    if (negatives.size() % 2 != 0) throw ValidationError("odd number of -1 eigenvalues; determinant is not +1");
    for (std::size_t k = 0; k < negatives.size(); k += 2)
        planes_.push_back({negatives[k], negatives[k + 1], std::numbers::pi});
}

Eigen::MatrixXd GeodesicPath::block_form(double alpha) const {
    Eigen::MatrixXd t = Eigen::MatrixXd::Identity(base_.d, base_.d);
    for (const auto& p : planes_) {
        const double c = std::cos(alpha * p.theta), s = std::sin(alpha * p.theta);
        t(p.a, p.a) = c;
        t(p.a, p.b) = -s;
        t(p.b, p.a) = s;
        t(p.b, p.b) = c;
    }
    return t;
}

RotationMatrix GeodesicPath::power(double alpha) const {
    if (!(alpha >= 0 && alpha <= 1)) throw UsageError("rotation alpha must lie in [0, 1]");
    RotationMatrix out;
    out.d = base_.d;
    out.seed = base_.seed;
    out.alpha = alpha * base_.alpha;
    if (alpha == 0) out.q = Eigen::MatrixXd::Identity(base_.d, base_.d);
    else out.q = u_ * block_form(alpha) * u_.transpose();
    return out;
}

double GeodesicPath::reconstruction_error() const {
    return (u_ * block_form(1) * u_.transpose() - base_.q).norm();
}

void write_rotation(const RotationMatrix& q, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const auto d = to_le(static_cast<std::uint64_t>(q.d));
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
    for (int i = 0; i < q.d; ++i)
        for (int j = 0; j < q.d; ++j) {
            const auto bits = to_le(std::bit_cast<std::uint64_t>(q.q(i, j)));
            out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
    if (!out) throw ValidationError("cannot write " + path.string());
}

RotationMatrix read_rotation(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::uint64_t d = 0;
    in.read(reinterpret_cast<char*>(&d), sizeof d);
    d = to_le(d);
    if (!in || d == 0 || d > 65536) throw ValidationError(path.string() + ": bad rotation header");
    const auto expected = 8 + 8 * d * d;
    if (std::filesystem::file_size(path) != expected)
        throw ValidationError(path.string() + ": expected " + std::to_string(expected) + " bytes");
    RotationMatrix q;
    q.d = static_cast<int>(d);
    q.q.resize(q.d, q.d);
    for (int i = 0; i < q.d; ++i)
        for (int j = 0; j < q.d; ++j) {
            std::uint64_t bits = 0;
            in.read(reinterpret_cast<char*>(&bits), sizeof bits);
            q.q(i, j) = std::bit_cast<double>(to_le(bits));
        }
    return q;
}

RotatedSource::RotatedSource(const VolumeSource& source, RotationMatrix q)
    : source_(source), q_(std::move(q)), meta_(source.meta()) {
    if (q_.d != source.units())
        throw UsageError("rotation dimension " + std::to_string(q_.d) + " does not match " +
                         std::to_string(source.units()) + " units");
    identity_ = q_.q.isIdentity(0.0);
    meta_.attributes["rotation_seed"] = std::to_string(q_.seed);
    meta_.attributes["rotation_alpha"] = format_number(q_.alpha);
}

ActivationVolume RotatedSource::read(std::size_t i) const {
    auto volume = source_.read(i);
    if (identity_) return volume;
    using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto p = static_cast<Eigen::Index>(volume.plane_size());
    Eigen::Map<RowMajor> a(volume.values.data(), volume.units, p);
    const Eigen::MatrixXd rotated = q_.q * a.cast<double>();
    a = rotated.cast<float>();
    return volume;
}

StoreManifest rotate_store(const VolumeSource& source, const RotationMatrix& q, const std::filesystem::path& out,
                           int workers) {
    const RotatedSource rotated(source, q);
    workers = resolve_workers(workers);
    StoreWriter writer(out, rotated.meta());
    constexpr std::size_t kChunk = 64;
    std::vector<ActivationVolume> buffer;
    for (std::size_t start = 0; start < rotated.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, rotated.size() - start);
        buffer.assign(n, ActivationVolume{});
        detail::FirstError error;
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
            const auto idx = start + static_cast<std::size_t>(j);
            try {
                buffer[static_cast<std::size_t>(j)] = rotated.read(idx);
            } catch (...) {
                error.capture(rotated.image_id(idx));
            }
        }
        if (error.failed()) error.rethrow();
        for (const auto& v : buffer) writer.append(v);
    }
    return writer.finish();
}

std::vector<RotationSweepPoint> rotation_sweep(const VolumeSource& source, const DatasetIndex& index,
                                               std::span<const double> alphas,
                                               std::span<const std::uint64_t> seeds, double tau,
                                               const DissectionOptions& options) {
    std::vector<GeodesicPath> paths;
    paths.reserve(seeds.size());
    for (auto seed : seeds) paths.emplace_back(sample_rotation(source.units(), seed));

    std::vector<RotationSweepPoint> out;
    for (double alpha : alphas)
        for (const auto& path : paths) {
            const RotatedSource rotated(source, path.power(alpha));
            auto result = dissect(rotated, index, tau, options);
            out.push_back({alpha, path.base().seed, std::move(result.summary)});
        }
    std::stable_sort(out.begin(), out.end(), [](const RotationSweepPoint& a, const RotationSweepPoint& b) {
        return a.alpha != b.alpha ? a.alpha < b.alpha : a.seed < b.seed;
    });
    return out;
}

void write_rotation_sweep_csv(std::span<const RotationSweepPoint> points, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    out << "alpha,seed,unique_detectors,total_detectors,ratio\n";
    for (const auto& p : points)
        out << format_number(p.alpha) << ',' << p.seed << ',' << p.summary.unique_detectors << ','
            << p.summary.total_detectors << ',' << format_number(p.summary.ratio) << '\n';
    if (!out) throw ValidationError("cannot write " + path.string());
}

}  // namespace netdissect
