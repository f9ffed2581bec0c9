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
#include <string>
#include <vector>

#include "netdissect/activation_store.hpp"
#include "netdissect/dataset_index.hpp"
#include "netdissect/thresholds.hpp"

namespace netdissect {

/// Dataset-pooled intersection and union counts for every (unit, concept).
/// Sums run only over images carrying at least one label of the concept's
/// category.
class IoUTable {
public:
    IoUTable() = default;
    IoUTable(int units, std::vector<Concept> concepts);

    int units() const noexcept { return units_; }
    const std::vector<Concept>& concepts() const noexcept { return concepts_; }
    std::size_t concept_count() const noexcept { return concepts_.size(); }

    std::uint64_t intersection(int unit, std::size_t concept_pos) const noexcept { return inter_[cell(unit, concept_pos)]; }
    std::uint64_t union_count(int unit, std::size_t concept_pos) const noexcept { return union_[cell(unit, concept_pos)]; }
    std::uint64_t images_considered(std::size_t concept_pos) const noexcept { return images_[concept_pos]; }

    /// intersection / union, 0 when the union is empty.
    double iou(int unit, std::size_t concept_pos) const noexcept;

    void set(int unit, std::size_t concept_pos, std::uint64_t intersection, std::uint64_t union_count);
    void set_images_considered(std::size_t concept_pos, std::uint64_t n) { images_[concept_pos] = n; }

    // Provenance carried into reports.
    std::string layer;
    double tau = 0;

    friend bool operator==(const IoUTable&, const IoUTable&) = default;

private:
    std::size_t cell(int unit, std::size_t concept_pos) const noexcept {
        return static_cast<std::size_t>(unit) * concepts_.size() + concept_pos;
    }

    int units_ = 0;
    std::vector<Concept> concepts_;
    std::vector<std::uint64_t> inter_;
    std::vector<std::uint64_t> union_;
    std::vector<std::uint64_t> images_;
};

struct ScoringOptions {
    int workers = 0;
    /// Concept ids to score; empty means every retained concept.
    std::vector<int> concept_ids;
};

/// Streams the store once: upsamples each unit map, binarizes it against
/// every threshold set, and accumulates counts against every concept present.
/// One table per threshold set; all sets must match the store's unit count.
/// Throws ValidationError for images missing from the index or whose
/// activation grid does not fit the image.
std::vector<IoUTable> accumulate_iou(const VolumeSource& source, const DatasetIndex& index,
                                     std::span<const UnitThresholds> thresholds, const ScoringOptions& options = {});
IoUTable accumulate_iou(const VolumeSource& source, const DatasetIndex& index, const UnitThresholds& thresholds,
                        const ScoringOptions& options = {});

/// Serial reference kernel: materializes S_k and every L_c per image and
/// counts per (unit, concept) directly. Kept for tests and benchmarks.
IoUTable accumulate_iou_serial(const VolumeSource& source, const DatasetIndex& index,
                               const UnitThresholds& thresholds, const ScoringOptions& options = {});

/// unit,concept_id,category,intersection,union,iou,images_considered
void write_iou_csv(const IoUTable& table, const std::filesystem::path& path);
IoUTable read_iou_csv(const std::filesystem::path& path, const DatasetIndex* names = nullptr);

/// Binary mirror of the CSV (plus concept names) for fast re-ranking.
void write_iou_cache(const IoUTable& table, const std::filesystem::path& path);
IoUTable read_iou_cache(const std::filesystem::path& path);

/// Shortest round-tripping decimal form; used for every float in outputs.
std::string format_number(double value);

namespace detail {
std::vector<std::size_t> select_concepts(const DatasetIndex& index, const std::vector<int>& ids);
RfGeometry checked_geometry(const LayerMeta& meta, const ImageRecord& record, int act_height, int act_width);
}  // namespace detail

}  // namespace netdissect
