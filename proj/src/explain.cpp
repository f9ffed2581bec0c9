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

#include "netdissect/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "json.hpp"

#include "netdissect/csv.hpp"
#include "netdissect/errors.hpp"
#include "netdissect/log.hpp"
#include "netdissect/png_io.hpp"
#include "netdissect/scoring.hpp"
#include "netdissect/upsample.hpp"

namespace netdissect {

LinearHead load_linear_head(const std::filesystem::path& path, std::optional<int> expected_units) {
    CsvReader csv(path);
    const auto cc = csv.column("class"), cu = csv.column("unit"), cw = csv.column("weight");

    std::vector<std::string> order;
    std::map<std::string, std::map<int, double>> weights;
    std::map<std::string, double> bias;
    int max_unit = -1;
    csv.for_each([&](const std::vector<std::string>& row, std::size_t line) {
        const auto& name = row[cc];
        if (name.empty()) throw ParseError(csv.file(), line, "empty class name");
        if (!weights.count(name)) {
            order.push_back(name);
            weights[name];
        }
        const double w = parse_double(row[cw], csv.file(), line);
        if (!std::isfinite(w)) throw ParseError(csv.file(), line, "non-finite weight");
        if (row[cu] == "bias") {
            if (!bias.emplace(name, w).second) throw ParseError(csv.file(), line, "duplicate bias for " + name);
            return;
        }
        const auto unit = parse_int(row[cu], csv.file(), line);
        if (unit < 0) throw ParseError(csv.file(), line, "negative unit index");
        if (!weights[name].emplace(static_cast<int>(unit), w).second)
            throw ParseError(csv.file(), line, "duplicate weight for class " + name + " unit " + std::to_string(unit));
        max_unit = std::max(max_unit, static_cast<int>(unit));
    });
    if (order.empty()) throw ValidationError(path.string() + ": no classes");

    LinearHead head;
    head.units = expected_units.value_or(max_unit + 1);
    if (max_unit >= head.units)
        throw ValidationError(path.string() + ": unit " + std::to_string(max_unit) + " exceeds " +
                              std::to_string(head.units) + " units");
    for (const auto& name : order) {
        const auto& w = weights[name];
        if (static_cast<int>(w.size()) != head.units)
            throw ValidationError(path.string() + ": class " + name + " has " + std::to_string(w.size()) +
                                  " weights, expected " + std::to_string(head.units));
        std::vector<double> row(static_cast<std::size_t>(head.units));
        for (const auto& [unit, value] : w) row[static_cast<std::size_t>(unit)] = value;
        head.class_names.push_back(name);
        head.weights.push_back(std::move(row));
        head.bias.push_back(bias.count(name) ? bias[name] : 0.0);
    }
    return head;
}

std::vector<double> pooled_features(const ActivationVolume& volume) {
    std::vector<double> x(static_cast<std::size_t>(volume.units), 0.0);
    for (int k = 0; k < volume.units; ++k)
        for (float v : volume.unit(k)) x[static_cast<std::size_t>(k)] += v;
    return x;
}

std::vector<UnitContribution> rank_contributions(std::span<const double> weights, std::span<const double> features) {
    if (weights.size() != features.size())
        throw UsageError("head has " + std::to_string(weights.size()) + " weights but the volume has " +
                         std::to_string(features.size()) + " units");
    std::vector<UnitContribution> out(weights.size());
    for (std::size_t n = 0; n < weights.size(); ++n)
        out[n] = {static_cast<int>(n), weights[n], features[n], weights[n] * features[n], std::nullopt};
    std::stable_sort(out.begin(), out.end(), [](const UnitContribution& a, const UnitContribution& b) {
        return a.contribution > b.contribution;
    });
    return out;
}

UnitSegmentation segment_instance(std::span<const double> upsampled, int height, int width, double q,
                                  SegmentationRule rule) {
    if (!(q > 0 && q <= 1)) throw UsageError("segmentation quantile must lie in (0, 1]");
    UnitSegmentation seg;
    seg.mask = Bitmask(width, height);
    if (upsampled.empty()) return seg;
    if (rule == SegmentationRule::quantile) {
        const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(q * upsampled.size() - 1e-9)));
        std::vector<double> sorted(upsampled.begin(), upsampled.end());
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(count - 1), sorted.end(),
                         std::greater<>());
        seg.threshold = sorted[count - 1];
    } else {
        seg.threshold = q * *std::max_element(upsampled.begin(), upsampled.end());
    }
    for (std::size_t i = 0; i < upsampled.size(); ++i)
        if (upsampled[i] >= seg.threshold) seg.mask.set(i);
    return seg;
}

Explanation explain_prediction(const ActivationVolume& volume, const LinearHead& head,
                               std::span<const DetectorAssignment> assignments, const RfGeometry& geometry,
                               int image_height, int image_width, const ExplainOptions& options) {
    if (head.units != volume.units)
        throw UsageError("head expects " + std::to_string(head.units) + " units, volume has " +
                         std::to_string(volume.units));
    if (options.top_m < 1) throw UsageError("top unit count must be at least 1");
    const auto x = pooled_features(volume);

    Explanation e;
    e.image_id = volume.image_id;
    for (std::size_t c = 0; c < head.weights.size(); ++c) {
        double s = head.bias[c];
        for (std::size_t n = 0; n < x.size(); ++n) s += head.weights[c][n] * x[n];
        if (c == 0 || s > e.score) {
            e.score = s;
            e.predicted_class = static_cast<int>(c);
        }
    }
    e.class_name = head.class_names[static_cast<std::size_t>(e.predicted_class)];
    e.contributions = rank_contributions(head.weights[static_cast<std::size_t>(e.predicted_class)], x);
    for (auto& c : e.contributions)
        for (const auto& a : assignments)
            if (a.unit == c.unit && a.assigned) c.label = a;

    int top = options.top_m;
    if (top > volume.units) {
        log_warning("top unit count " + std::to_string(top) + " exceeds " + std::to_string(volume.units) +
                    " units; clamped");
        top = volume.units;
    }
    for (int r = 0; r < top; ++r) {
        const int unit = e.contributions[static_cast<std::size_t>(r)].unit;
        const auto s = upsample(volume.unit(unit), volume.height, volume.width, geometry, image_height, image_width);
        auto seg = segment_instance(s.values, image_height, image_width, options.seg_quantile, options.rule);
        seg.unit = unit;
        e.segmentations.push_back(std::move(seg));
    }
    return e;
}

std::string explanation_to_json(const Explanation& e) {
    nlohmann::ordered_json j;
    j["image_id"] = e.image_id;
    j["predicted_class"] = e.class_name;
    j["score"] = e.score;
    auto& contributions = j["contributions"] = nlohmann::ordered_json::array();
    for (const auto& c : e.contributions) {
        nlohmann::ordered_json row = {{"unit", c.unit},
                                      {"weight", c.weight},
                                      {"activation", c.activation},
                                      {"contribution", c.contribution}};
        if (c.label) {
            row["concept"] = c.label->concept_name;
            row["category"] = to_string(c.label->category);
            row["iou"] = c.label->iou;
        } else {
            row["concept"] = nullptr;
        }
        contributions.push_back(std::move(row));
    }
    auto& segs = j["segmentations"] = nlohmann::ordered_json::array();
    for (const auto& s : e.segmentations) {
        char name[48];
        std::snprintf(name, sizeof name, "mask_unit%04d.png", s.unit);
        segs.push_back({{"unit", s.unit},
                        {"threshold", s.threshold},
                        {"pixels", s.mask.count()},
                        {"mask", name}});
    }
    return j.dump(2);
}

std::vector<std::string> write_explanation(const Explanation& e, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> written;
    {
        std::ofstream out(out_dir / "explanation.json", std::ios::trunc);
        out << explanation_to_json(e) << '\n';
        if (!out) throw ValidationError("cannot write " + (out_dir / "explanation.json").string());
    }
    written.emplace_back("explanation.json");
    for (const auto& s : e.segmentations) {
        char name[48];
        std::snprintf(name, sizeof name, "mask_unit%04d.png", s.unit);
        std::vector<std::uint8_t> pixels(static_cast<std::size_t>(s.mask.width()) * s.mask.height());
        for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = s.mask.get(i) ? 255 : 0;
        write_png_gray8(out_dir / name, s.mask.width(), s.mask.height(), pixels);
        written.emplace_back(name);
    }
    return written;
}

}  // namespace netdissect
