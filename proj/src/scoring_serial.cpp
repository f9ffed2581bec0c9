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

#include "netdissect/errors.hpp"
#include "netdissect/scoring.hpp"
#include "netdissect/upsample.hpp"

namespace netdissect {

IoUTable accumulate_iou_serial(const VolumeSource& source, const DatasetIndex& index,
                               const UnitThresholds& thresholds, const ScoringOptions& options) {
    const int k = source.units();
    if (static_cast<int>(thresholds.units()) != k) throw UsageError("threshold/store unit count mismatch");

    const auto selected = detail::select_concepts(index, options.concept_ids);
    std::vector<Concept> concepts;
    for (auto pos : selected) concepts.push_back(index.concepts()[pos]);

    IoUTable table(k, concepts);
    table.layer = source.meta().layer_name;
    table.tau = thresholds.tau;
    std::vector<std::uint64_t> inter(static_cast<std::size_t>(k) * concepts.size(), 0);
    std::vector<std::uint64_t> uni(inter.size(), 0);
    std::vector<std::uint64_t> images(concepts.size(), 0);

    for (std::size_t i = 0; i < source.size(); ++i) {
        const auto volume = source.read(i);
        const auto* rec = index.find_image(volume.image_id);
        if (!rec) throw ValidationError("image " + volume.image_id + " is in the store but not the dataset index");
        const auto geometry = detail::checked_geometry(source.meta(), *rec, volume.height, volume.width);
        const auto labels = index.decode_labels(*rec);

        std::vector<Bitmask> unit_masks;
        unit_masks.reserve(static_cast<std::size_t>(k));
        for (int u = 0; u < k; ++u) {
            const auto s = upsample(volume.unit(u), volume.height, volume.width, geometry, rec->height, rec->width);
            unit_masks.push_back(binarize(s, thresholds.levels[static_cast<std::size_t>(u)]));
        }

        for (std::size_t c = 0; c < concepts.size(); ++c) {
            if (!rec->category_present.contains(concepts[c].category)) continue;
            ++images[c];
            Bitmask label(rec->width, rec->height);
            if (is_full_image(concepts[c].category)) {
                if (std::find(labels.full_image.begin(), labels.full_image.end(), concepts[c].id) !=
                    labels.full_image.end())
                    label.fill();
            } else {
                for (const auto& m : labels.pixel)
                    if (m.concept_id == concepts[c].id) label = m.bitmap;
            }
            const auto label_pixels = label.count();
            for (int u = 0; u < k; ++u) {
                const auto& m = unit_masks[static_cast<std::size_t>(u)];
                const auto in = m.and_count(label);
                const auto cell = static_cast<std::size_t>(u) * concepts.size() + c;
                inter[cell] += in;
                uni[cell] += m.count() + label_pixels - in;
            }
        }
    }

    for (int u = 0; u < k; ++u)
        for (std::size_t c = 0; c < concepts.size(); ++c) {
            const auto cell = static_cast<std::size_t>(u) * concepts.size() + c;
            table.set(u, c, inter[cell], uni[cell]);
        }
    for (std::size_t c = 0; c < concepts.size(); ++c) table.set_images_considered(c, images[c]);
    return table;
}

}  // namespace netdissect
