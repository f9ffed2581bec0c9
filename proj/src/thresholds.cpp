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

#include "netdissect/thresholds.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

#include "netdissect/errors.hpp"
#include "netdissect/parallel.hpp"
#include "netdissect/quantile_sketch.hpp"

namespace netdissect {

namespace {

constexpr std::size_t kSketchBlock = 32;

void check_taus(std::span<const double> taus) {
    if (taus.empty()) throw UsageError("no tau requested");
    for (double tau : taus)
        if (!(tau > 0.0 && tau <= 0.5)) throw UsageError("tau must lie in (0, 0.5], got " + std::to_string(tau));
}

std::vector<UnitThresholds> exact_thresholds(const VolumeSource& source, std::span<const double> taus, int workers,
                                             std::uint64_t per_unit) {
    const int k = source.units();
    const std::size_t n_images = source.size();
    std::vector<std::uint64_t> offsets(n_images + 1, 0);
    for (std::size_t i = 0; i < n_images; ++i) {
        const auto [h, w] = source.dims(i);
        offsets[i + 1] = offsets[i] + static_cast<std::uint64_t>(h) * w;
    }
    std::vector<std::vector<float>> samples(static_cast<std::size_t>(k), std::vector<float>(per_unit));

    detail::FirstError error;
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_images); ++i) {
        if (error.failed()) continue;
        const auto idx = static_cast<std::size_t>(i);
        try {
            const auto volume = source.read(idx);
            for (int u = 0; u < k; ++u) {
                const auto plane = volume.unit(u);
                std::copy(plane.begin(), plane.end(), samples[static_cast<std::size_t>(u)].begin() +
                                                          static_cast<std::ptrdiff_t>(offsets[idx]));
            }
        } catch (...) {
            error.capture(source.image_id(idx));
        }
    }
    if (error.failed()) error.rethrow();

    std::vector<UnitThresholds> out(taus.size());
    for (std::size_t t = 0; t < taus.size(); ++t) {
        out[t].tau = taus[t];
        out[t].mode = ThresholdMode::exact;
        out[t].levels.assign(static_cast<std::size_t>(k), 0.0f);
        out[t].counts.assign(static_cast<std::size_t>(k), per_unit);
    }
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
    for (int u = 0; u < k; ++u) {
        auto& values = samples[static_cast<std::size_t>(u)];
        for (std::size_t t = 0; t < taus.size(); ++t) {
            // Ascending position N-1-m holds the smallest value with at most m
            // samples strictly above it.
            const auto m = allowed_above(taus[t], per_unit);
            const auto pos = values.begin() + static_cast<std::ptrdiff_t>(per_unit - 1 - m);
            std::nth_element(values.begin(), pos, values.end());
            out[t].levels[static_cast<std::size_t>(u)] = *pos;
        }
    }
    return out;
}

std::vector<UnitThresholds> sketch_thresholds(const VolumeSource& source, std::span<const double> taus,
                                              const ThresholdOptions& options, int workers, std::uint64_t per_unit) {
    const auto k = static_cast<std::size_t>(source.units());
    const auto capacity = QuantileSketch::capacity_for(options.epsilon, per_unit);
    auto make = [&](std::size_t) {
        return std::vector<QuantileSketch>(k, QuantileSketch(capacity, options.seed));
    };
    auto visit = [&](std::vector<QuantileSketch>& sketches, std::size_t, const ActivationVolume& volume) {
        for (std::size_t u = 0; u < k; ++u) sketches[u].insert(volume.unit(static_cast<int>(u)));
    };
    auto merge = [&](std::vector<QuantileSketch>& into, std::vector<QuantileSketch>&& from) {
        for (std::size_t u = 0; u < k; ++u) into[u].merge(from[u]);
    };
    const auto sketches = ordered_reduce(source, workers, kSketchBlock, make, visit, merge);

    std::vector<UnitThresholds> out(taus.size());
    for (std::size_t t = 0; t < taus.size(); ++t) {
        out[t].tau = taus[t];
        out[t].mode = ThresholdMode::sketch;
        out[t].epsilon = options.epsilon;
        out[t].levels.assign(k, 0.0f);
        out[t].counts.assign(k, per_unit);
    }
    for (std::size_t u = 0; u < k; ++u) {
        const auto levels = sketches[u].upper_thresholds(taus);
        for (std::size_t t = 0; t < taus.size(); ++t) out[t].levels[u] = levels[t];
    }
    return out;
}

}  // namespace

std::string to_string(ThresholdMode mode) {
    switch (mode) {
        case ThresholdMode::automatic: return "auto";
        case ThresholdMode::exact: return "exact";
        case ThresholdMode::sketch: return "sketch";
    }
    return "unknown";
}

std::vector<UnitThresholds> compute_thresholds(const VolumeSource& source, std::span<const double> taus,
                                               const ThresholdOptions& options) {
    check_taus(taus);
    if (source.size() == 0) throw UsageError("cannot compute thresholds on an empty store");
    const auto per_unit = source.total_locations();
    const int workers = resolve_workers(options.workers);

    auto mode = options.mode;
    if (mode == ThresholdMode::automatic)
        mode = per_unit <= kExactModeLimit ? ThresholdMode::exact : ThresholdMode::sketch;

    auto out = mode == ThresholdMode::exact ? exact_thresholds(source, taus, workers, per_unit)
                                            : sketch_thresholds(source, taus, options, workers, per_unit);
    for (auto& t : out) t.layer = source.meta().layer_name;
    return out;
}

UnitThresholds compute_thresholds(const VolumeSource& source, double tau, const ThresholdOptions& options) {
    const double taus[] = {tau};
    return std::move(compute_thresholds(source, taus, options).front());
}

std::vector<double> fraction_above(const VolumeSource& source, const UnitThresholds& thresholds, int workers) {
    const auto k = static_cast<std::size_t>(source.units());
    if (thresholds.units() != k)
        throw UsageError("thresholds have " + std::to_string(thresholds.units()) + " units, store has " +
                         std::to_string(k));
    struct Counts {
        std::vector<std::uint64_t> above;
        std::uint64_t total = 0;
    };
    const Counts init{std::vector<std::uint64_t>(k, 0), 0};
    const auto counts = scan(
        source, workers, init,
        [&](Counts& c, std::size_t, const ActivationVolume& v) {
            for (std::size_t u = 0; u < k; ++u) {
                const float t = thresholds.levels[u];
                std::uint64_t n = 0;
                for (float a : v.unit(static_cast<int>(u))) n += a > t;
                c.above[u] += n;
            }
            c.total += v.plane_size();
        },
        [](Counts& into, Counts&& from) {
            for (std::size_t u = 0; u < into.above.size(); ++u) into.above[u] += from.above[u];
            into.total += from.total;
        });
    std::vector<double> out(k, 0.0);
    if (counts.total == 0) return out;
    for (std::size_t u = 0; u < k; ++u)
        out[u] = static_cast<double>(counts.above[u]) / static_cast<double>(counts.total);
    return out;
}

void write_thresholds_json(const UnitThresholds& thresholds, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["layer"] = thresholds.layer;
    j["tau"] = thresholds.tau;
    j["mode"] = to_string(thresholds.mode);
    j["epsilon"] = thresholds.epsilon;
    j["thresholds"] = thresholds.levels;
    j["counts"] = thresholds.counts;
    std::ofstream out(path, std::ios::trunc);
    out << j.dump(1) << '\n';
    if (!out) throw ValidationError("cannot write " + path.string());
}

UnitThresholds read_thresholds_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string(), 0, "cannot open file");
    UnitThresholds t;
    try {
        const auto j = nlohmann::json::parse(in);
        t.layer = j.at("layer").get<std::string>();
        t.tau = j.at("tau").get<double>();
        const auto mode = j.at("mode").get<std::string>();
        if (mode == "exact") {
            t.mode = ThresholdMode::exact;
        } else if (mode == "sketch") {
            t.mode = ThresholdMode::sketch;
        } else {
            throw ParseError(path.string(), 0, "unknown mode " + mode);
        }
        t.epsilon = j.at("epsilon").get<double>();
        t.levels = j.at("thresholds").get<std::vector<float>>();
        t.counts = j.at("counts").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    if (t.levels.size() != t.counts.size()) throw ParseError(path.string(), 0, "thresholds/counts length mismatch");
    return t;
}

}  // namespace netdissect
