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
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "netdissect/activation_store.hpp"
#include "netdissect/dissection.hpp"

namespace netdissect {

/// An element of SO(d) together with how it was produced.
struct RotationMatrix {
    int d = 0;
    std::uint64_t seed = 0;
    double alpha = 1;  // fractional power relative to the sampled draw
    Eigen::MatrixXd q;
};

/// Haar-random rotation: QR of an iid standard normal matrix with R's
/// diagonal made positive, then the last column negated if det(Q) = -1.
RotationMatrix sample_rotation(int d, std::uint64_t seed);

/// ||QᵀQ - I||_F
double orthogonality_error(const Eigen::MatrixXd& q);

/// Minimal geodesic from I to Q through the real Schur form Q = U T Uᵀ.
class GeodesicPath {
public:
    /// A plane of rotation spanned by Schur basis columns a and b.
    struct Plane {
        int a = 0;
        int b = 0;
        double theta = 0;  // in (-pi, pi]
    };

    explicit GeodesicPath(const RotationMatrix& q);

    int dimension() const noexcept { return base_.d; }
    const RotationMatrix& base() const noexcept { return base_; }
    const Eigen::MatrixXd& schur_basis() const noexcept { return u_; }
    const std::vector<Plane>& planes() const noexcept { return planes_; }

    /// The cleaned block-diagonal factor for exponent alpha.
    Eigen::MatrixXd block_form(double alpha) const;

    /// Q^alpha for alpha in [0, 1]; alpha = 0 is exactly the identity.
    RotationMatrix power(double alpha) const;

    /// ||U T Uᵀ - Q||_F with the cleaned T.
    double reconstruction_error() const;

private:
    RotationMatrix base_;
    Eigen::MatrixXd u_;
    std::vector<Plane> planes_;
};

inline RotationMatrix fractional_power(const GeodesicPath& path, double alpha) { return path.power(alpha); }

/// Flat binary: d as little-endian u64, then d*d little-endian float64, row-major.
void write_rotation(const RotationMatrix& q, const std::filesystem::path& path);
RotationMatrix read_rotation(const std::filesystem::path& path);

/// View of `source` with every activation column a replaced by Q·a. Values
/// are computed in double and rounded to float once.
class RotatedSource final : public VolumeSource {
public:
    RotatedSource(const VolumeSource& source, RotationMatrix q);

    const LayerMeta& meta() const override { return meta_; }
    std::size_t size() const override { return source_.size(); }
    const std::string& image_id(std::size_t i) const override { return source_.image_id(i); }
    std::pair<int, int> dims(std::size_t i) const override { return source_.dims(i); }
    ActivationVolume read(std::size_t i) const override;

private:
    const VolumeSource& source_;
    RotationMatrix q_;
    LayerMeta meta_;
    bool identity_ = false;
};

/// Writes the rotated copy of `source` to `out`. Volumes are rotated in
/// parallel and appended in source order.
StoreManifest rotate_store(const VolumeSource& source, const RotationMatrix& q, const std::filesystem::path& out,
                           int workers = 0);

struct RotationSweepPoint {
    double alpha = 0;
    std::uint64_t seed = 0;
    LayerSummary summary;
};

/// Full dissection (thresholds recomputed) of Q^alpha for every seed and
/// alpha. Rows are ordered by alpha, then seed.
std::vector<RotationSweepPoint> rotation_sweep(const VolumeSource& source, const DatasetIndex& index,
                                               std::span<const double> alphas,
                                               std::span<const std::uint64_t> seeds, double tau = kDefaultTau,
                                               const DissectionOptions& options = {});

// alpha,seed,unique_detectors,total_detectors,ratio
void write_rotation_sweep_csv(std::span<const RotationSweepPoint> points, const std::filesystem::path& path);

}  // namespace netdissect
