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

#include "netdissect/dissection.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

#include "netdissect/csv.hpp"
#include "netdissect/errors.hpp"

namespace netdissect {

namespace {

using u128 = unsigned __int128;

// Exact comparison of a/b against c/d with 0/0 treated as 0.
int compare_ratio(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    if (b == 0) a = 0, b = 1;
    if (d == 0) c = 0, d = 1;
    const u128 lhs = static_cast<u128>(a) * d;
    const u128 rhs = static_cast<u128>(c) * b;
    return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

bool identity_less(const Concept& a, const Concept& b) {
    const auto ca = to_string(a.category), cb = to_string(b.category);
    if (ca != cb) return ca < cb;
    return a.name < b.name;
}

std::size_t transition_slot(const std::optional<DetectorAssignment>& a) {
    return a && a->assigned ? index_of(a->category) : kCategoryCount;
}

}  // namespace

std::vector<DetectorAssignment> assign_detectors(const IoUTable& table, double detector_threshold) {
    if (!(detector_threshold >= 0)) throw UsageError("detector threshold must be non-negative");
    std::vector<DetectorAssignment> out;
    out.reserve(static_cast<std::size_t>(table.units()));
    const auto& concepts = table.concepts();
    for (int u = 0; u < table.units(); ++u) {
        DetectorAssignment a;
        a.unit = u;
        a.detector_threshold = detector_threshold;
        std::optional<std::size_t> best;
        for (std::size_t c = 0; c < concepts.size(); ++c) {
            if (!best) {
                best = c;
                continue;
            }
            const int cmp = compare_ratio(table.intersection(u, c), table.union_count(u, c),
                                          table.intersection(u, *best), table.union_count(u, *best));
            if (cmp > 0 || (cmp == 0 && identity_less(concepts[c], concepts[*best]))) best = c;
        }
        if (best) {
            a.iou = table.iou(u, *best);
            if (a.iou > detector_threshold) {
                a.assigned = true;
                a.concept_id = concepts[*best].id;
                a.concept_name = concepts[*best].name;
                a.category = concepts[*best].category;
            }
        }
        out.push_back(std::move(a));
    }
    return out;
}

LayerSummary summarize(std::span<const DetectorAssignment> assignments, int units) {
    LayerSummary s;
    s.units = units;
    std::map<std::pair<std::string, std::string>, ConceptStat> by_concept;
    for (const auto& a : assignments) {
        if (!a.assigned) continue;
        ++s.total_detectors;
        ++s.detectors_by_category[index_of(a.category)];
        auto& stat = by_concept[{std::string(to_string(a.category)), a.concept_name}];
        stat.concept_id = a.concept_id;
        stat.name = a.concept_name;
        stat.category = a.category;
        ++stat.detectors;
        stat.mean_iou += a.iou;
    }
    for (auto& [key, stat] : by_concept) {
        stat.mean_iou /= stat.detectors;
        ++s.unique_by_category[index_of(stat.category)];
        s.concepts.push_back(stat);
    }
    s.unique_detectors = static_cast<int>(by_concept.size());
    s.ratio = units > 0 ? static_cast<double>(s.unique_detectors) / units : 0.0;
    std::stable_sort(s.concepts.begin(), s.concepts.end(), [](const ConceptStat& a, const ConceptStat& b) {
        if (a.category != b.category) return index_of(a.category) < index_of(b.category);
        if (a.detectors != b.detectors) return a.detectors > b.detectors;
        return a.name < b.name;
    });
    return s;
}

DissectionResult dissect(const VolumeSource& source, const DatasetIndex& index, double tau,
                         const DissectionOptions& options) {
    const double taus[] = {tau};
    return std::move(tau_sweep(source, index, taus, options).front());
}

std::vector<DissectionResult> tau_sweep(const VolumeSource& source, const DatasetIndex& index,
                                        std::span<const double> taus, const DissectionOptions& options) {
    if (!std::is_sorted(taus.begin(), taus.end())) throw UsageError("tau list must be sorted ascending");
    auto thresholds = compute_thresholds(source, taus, options.thresholds);
    auto tables = accumulate_iou(source, index, thresholds, options.scoring);
    std::vector<DissectionResult> out;
    out.reserve(taus.size());
    for (std::size_t t = 0; t < taus.size(); ++t) {
        DissectionResult r;
        r.tau = taus[t];
        r.thresholds = std::move(thresholds[t]);
        r.table = std::move(tables[t]);
        r.assignments = assign_detectors(r.table, options.detector_threshold);
        r.summary = summarize(r.assignments, source.units());
        out.push_back(std::move(r));
    }
    return out;
}

EvolutionReport diff_runs(std::span<const DetectorAssignment> before, std::span<const DetectorAssignment> after) {
    if (before.size() != after.size())
        throw UsageError("runs have different unit counts (" + std::to_string(before.size()) + " vs " +
                         std::to_string(after.size()) + ")");
    std::map<int, const DetectorAssignment*> a_by_unit, b_by_unit;
    for (const auto& a : before) a_by_unit[a.unit] = &a;
    for (const auto& b : after) b_by_unit[b.unit] = &b;
    if (a_by_unit.size() != before.size() || b_by_unit.size() != after.size())
        throw UsageError("duplicate unit in run");

    EvolutionReport report;
    for (const auto& [unit, a] : a_by_unit) {
        const auto it = b_by_unit.find(unit);
        if (it == b_by_unit.end()) throw UsageError("unit " + std::to_string(unit) + " missing from second run");
        const auto* b = it->second;
        UnitEvolution e;
        e.unit = unit;
        if (a->assigned) e.before = *a;
        if (b->assigned) e.after = *b;
        e.same = a->assigned == b->assigned &&
                 (!a->assigned || (a->category == b->category && a->concept_name == b->concept_name));
        report.stable += e.same;
        ++report.transitions[transition_slot(e.before)][transition_slot(e.after)];
        report.units.push_back(std::move(e));
    }
    report.stable_fraction =
        report.units.empty() ? 1.0 : static_cast<double>(report.stable) / static_cast<double>(report.units.size());
    return report;
}

void write_assignments_csv(std::span<const DetectorAssignment> assignments, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    out << "unit,concept,category,iou\n";
    for (const auto& a : assignments) {
        out << a.unit << ',';
        if (a.assigned) out << csv_escape(a.concept_name) << ',' << to_string(a.category);
        else out << ',';
        out << ',' << format_number(a.iou) << '\n';
    }
    if (!out) throw ValidationError("cannot write " + path.string());
}

std::vector<DetectorAssignment> read_assignments_csv(const std::filesystem::path& path, double detector_threshold) {
    CsvReader csv(path);
    const auto cu = csv.column("unit"), cc = csv.column("concept"), ccat = csv.column("category"),
               ci = csv.column("iou");
    std::vector<DetectorAssignment> out;
    csv.for_each([&](const std::vector<std::string>& row, std::size_t line) {
        DetectorAssignment a;
        a.unit = static_cast<int>(parse_int(row[cu], csv.file(), line));
        a.iou = parse_double(row[ci], csv.file(), line);
        a.detector_threshold = detector_threshold;
        if (!row[cc].empty()) {
            const auto cat = parse_category(row[ccat]);
            if (!cat) throw ParseError(csv.file(), line, "unknown category '" + row[ccat] + "'");
            a.assigned = true;
            a.concept_name = row[cc];
            a.category = *cat;
        }
        out.push_back(std::move(a));
    });
    return out;
}

void write_evolution_csv(const EvolutionReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    out << "unit,before_concept,before_category,after_concept,after_category,same\n";
    auto cell = [&](const std::optional<DetectorAssignment>& a) {
        if (a) out << csv_escape(a->concept_name) << ',' << to_string(a->category);
        else out << ',';
    };
    for (const auto& e : report.units) {
        out << e.unit << ',';
        cell(e.before);
        out << ',';
        cell(e.after);
        out << ',' << (e.same ? 1 : 0) << '\n';
    }
    if (!out) throw ValidationError("cannot write " + path.string());
}

void write_transitions_csv(const EvolutionReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    auto name = [](std::size_t i) { return i < kCategoryCount ? std::string(to_string(kAllCategories[i])) : "none"; };
    out << "before\\after";
    for (std::size_t j = 0; j <= kCategoryCount; ++j) out << ',' << name(j);
    out << '\n';
    for (std::size_t i = 0; i <= kCategoryCount; ++i) {
        out << name(i);
        for (std::size_t j = 0; j <= kCategoryCount; ++j) out << ',' << report.transitions[i][j];
        out << '\n';
    }
    if (!out) throw ValidationError("cannot write " + path.string());
}

std::string summary_to_json(const LayerSummary& s, double tau, double detector_threshold, const std::string& layer) {
    nlohmann::ordered_json j;
    j["layer"] = layer;
    j["tau"] = tau;
    j["detector_threshold"] = detector_threshold;
    j["units"] = s.units;
    j["total_detectors"] = s.total_detectors;
    j["unique_detectors"] = s.unique_detectors;
    j["ratio"] = s.ratio;
    nlohmann::ordered_json by_cat = nlohmann::ordered_json::object(), det_cat = nlohmann::ordered_json::object();
    for (auto cat : kAllCategories) {
        by_cat[std::string(to_string(cat))] = s.unique_by_category[index_of(cat)];
        det_cat[std::string(to_string(cat))] = s.detectors_by_category[index_of(cat)];
    }
    j["unique_by_category"] = std::move(by_cat);
    j["detectors_by_category"] = std::move(det_cat);
    auto concepts = nlohmann::ordered_json::array();
    for (const auto& c : s.concepts)
        concepts.push_back({{"concept", c.name},
                            {"category", to_string(c.category)},
                            {"detectors", c.detectors},
                            {"mean_iou", c.mean_iou}});
    j["concepts"] = std::move(concepts);
    return j.dump(2);
}

}  // namespace netdissect
