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

#include "netdissect/scoring.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>

#include "netdissect/csv.hpp"
#include "netdissect/errors.hpp"
#include "netdissect/parallel.hpp"
#include "netdissect/upsample.hpp"

namespace netdissect {

IoUTable::IoUTable(int units, std::vector<Concept> concepts)
    : units_(units), concepts_(std::move(concepts)),
      inter_(static_cast<std::size_t>(units) * concepts_.size(), 0),
      union_(static_cast<std::size_t>(units) * concepts_.size(), 0), images_(concepts_.size(), 0) {}

double IoUTable::iou(int unit, std::size_t concept_pos) const noexcept {
    const auto u = union_[cell(unit, concept_pos)];
    return u == 0 ? 0.0 : static_cast<double>(inter_[cell(unit, concept_pos)]) / static_cast<double>(u);
}

void IoUTable::set(int unit, std::size_t concept_pos, std::uint64_t intersection, std::uint64_t union_count) {
    if (intersection > union_count) throw ValidationError("intersection exceeds union");
    inter_[cell(unit, concept_pos)] = intersection;
    union_[cell(unit, concept_pos)] = union_count;
}

std::string format_number(double value) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

namespace detail {

std::vector<std::size_t> select_concepts(const DatasetIndex& index, const std::vector<int>& ids) {
    std::vector<std::size_t> out;
    const auto& all = index.concepts();
    if (ids.empty()) {
        for (std::size_t i = 0; i < all.size(); ++i) out.push_back(i);
        return out;
    }
    for (std::size_t i = 0; i < all.size(); ++i)
        if (std::find(ids.begin(), ids.end(), all[i].id) != ids.end()) out.push_back(i);
    for (int id : ids)
        if (!index.find_concept(id)) throw UsageError("concept " + std::to_string(id) + " is not in the index");
    return out;
}

RfGeometry checked_geometry(const LayerMeta& meta, const ImageRecord& record, int act_height, int act_width) {
    const auto g = meta.geometry_for(act_height, act_width, record.height, record.width);
    if (!(g.stride_y > 0) || !(g.stride_x > 0)) throw ValidationError("non-positive receptive-field stride");
    if (!anchors_fit(act_height, g.offset_y, g.stride_y, record.height) ||
        !anchors_fit(act_width, g.offset_x, g.stride_x, record.width))
        throw ValidationError("activation grid " + std::to_string(act_height) + "x" + std::to_string(act_width) +
                              " does not fit image " + record.image_id + " (" + std::to_string(record.height) +
                              "x" + std::to_string(record.width) + ")");
    return g;
}

}  // namespace detail

namespace {

struct Accumulator {
    std::size_t sets = 0, units = 0, concepts = 0;
    std::vector<std::uint64_t> mask_pixels;  // [set][unit][category]: sum of |M_k| over images with the category
    std::vector<std::uint64_t> inter;        // [set][unit][concept]
    std::vector<std::uint64_t> extra;        // [set][unit][concept]: sum of |L_c| - |M_k ∩ L_c|
    std::array<std::uint64_t, kCategoryCount> category_images{};

    Accumulator(std::size_t s, std::size_t k, std::size_t c)
        : sets(s), units(k), concepts(c), mask_pixels(s * k * kCategoryCount, 0), inter(s * k * c, 0),
          extra(s * k * c, 0) {}

    void merge(const Accumulator& o) {
        for (std::size_t i = 0; i < mask_pixels.size(); ++i) mask_pixels[i] += o.mask_pixels[i];
        for (std::size_t i = 0; i < inter.size(); ++i) inter[i] += o.inter[i];
        for (std::size_t i = 0; i < extra.size(); ++i) extra[i] += o.extra[i];
        for (std::size_t i = 0; i < kCategoryCount; ++i) category_images[i] += o.category_images[i];
    }
};

}  // namespace

std::vector<IoUTable> accumulate_iou(const VolumeSource& source, const DatasetIndex& index,
                                     std::span<const UnitThresholds> thresholds, const ScoringOptions& options) {
    const int k = source.units();
    for (const auto& t : thresholds)
        if (static_cast<int>(t.units()) != k)
            throw UsageError("thresholds have " + std::to_string(t.units()) + " units, store has " +
                             std::to_string(k));

    const auto selected = detail::select_concepts(index, options.concept_ids);
    const auto& all = index.concepts();
    std::vector<Concept> table_concepts;
    std::vector<int> slot_of_id(65536, -1);
    CategorySet selected_categories;
    for (std::size_t pos = 0; pos < selected.size(); ++pos) {
        const auto& c = all[selected[pos]];
        table_concepts.push_back(c);
        slot_of_id[static_cast<std::size_t>(c.id)] = static_cast<int>(pos);
        selected_categories.insert(c.category);
    }
    const std::size_t n_sets = thresholds.size();
    const std::size_t n_units = static_cast<std::size_t>(k);
    const std::size_t n_concepts = table_concepts.size();
    const auto& meta = source.meta();

    const Accumulator init(n_sets, n_units, n_concepts);
    const auto acc = scan(
        source, options.workers, init,
        [&](Accumulator& a, std::size_t, const ActivationVolume& volume) {
            const auto* rec = index.find_image(volume.image_id);
            if (!rec) throw ValidationError("image " + volume.image_id + " is in the store but not the dataset index");
            const auto geometry = detail::checked_geometry(meta, *rec, volume.height, volume.width);

            CategorySet qualifying;
            for (auto cat : kAllCategories)
                if (rec->category_present.contains(cat) && selected_categories.contains(cat)) qualifying.insert(cat);
            if (qualifying.empty()) return;
            for (auto cat : kAllCategories)
                if (qualifying.contains(cat)) ++a.category_images[index_of(cat)];

            const auto labels = index.decode_labels(*rec);
            struct Present {
                std::size_t slot;
                const Bitmask* mask;  // null for full-image labels
                std::uint64_t pixels;
            };
            std::vector<Present> present;
            for (const auto& m : labels.pixel) {
                const int slot = slot_of_id[static_cast<std::size_t>(m.concept_id)];
                if (slot >= 0) present.push_back({static_cast<std::size_t>(slot), &m.bitmap, m.bitmap.count()});
            }
            const std::uint64_t image_pixels = static_cast<std::uint64_t>(rec->width) * rec->height;
            for (int id : labels.full_image) {
                const int slot = slot_of_id[static_cast<std::size_t>(id)];
                if (slot >= 0) present.push_back({static_cast<std::size_t>(slot), nullptr, image_pixels});
            }

            const UpsamplePlan plan(volume.height, volume.width, geometry, rec->height, rec->width);
            Bitmask mask(rec->width, rec->height);
            for (std::size_t s = 0; s < n_sets; ++s) {
                for (std::size_t u = 0; u < n_units; ++u) {
                    threshold_upsampled(volume.unit(static_cast<int>(u)), plan, thresholds[s].levels[u], mask);
                    const auto m = mask.count();
                    const std::size_t su = s * n_units + u;
                    for (auto cat : kAllCategories)
                        if (qualifying.contains(cat)) a.mask_pixels[su * kCategoryCount + index_of(cat)] += m;
                    for (const auto& p : present) {
                        const auto in = p.mask ? mask.and_count(*p.mask) : m;
                        a.inter[su * n_concepts + p.slot] += in;
                        a.extra[su * n_concepts + p.slot] += p.pixels - in;
                    }
                }
            }
        },
        [](Accumulator& into, Accumulator&& from) { into.merge(from); });

    std::vector<IoUTable> out;
    out.reserve(n_sets);
    for (std::size_t s = 0; s < n_sets; ++s) {
        IoUTable table(k, table_concepts);
        table.layer = meta.layer_name;
        table.tau = thresholds[s].tau;
        for (std::size_t c = 0; c < n_concepts; ++c)
            table.set_images_considered(c, acc.category_images[index_of(table_concepts[c].category)]);
        for (std::size_t u = 0; u < n_units; ++u) {
            const std::size_t su = s * n_units + u;
            for (std::size_t c = 0; c < n_concepts; ++c) {
                const auto cat = index_of(table_concepts[c].category);
                table.set(static_cast<int>(u), c, acc.inter[su * n_concepts + c],
                          acc.mask_pixels[su * kCategoryCount + cat] + acc.extra[su * n_concepts + c]);
            }
        }
        out.push_back(std::move(table));
    }
    return out;
}

IoUTable accumulate_iou(const VolumeSource& source, const DatasetIndex& index, const UnitThresholds& thresholds,
                        const ScoringOptions& options) {
    return std::move(accumulate_iou(source, index, std::span(&thresholds, 1), options).front());
}

// ---------------------------------------------------------------------------

void write_iou_csv(const IoUTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    out << "unit,concept_id,category,intersection,union,iou,images_considered\n";
    for (int u = 0; u < table.units(); ++u)
        for (std::size_t c = 0; c < table.concept_count(); ++c) {
            const auto& con = table.concepts()[c];
            out << u << ',' << con.id << ',' << to_string(con.category) << ',' << table.intersection(u, c) << ','
                << table.union_count(u, c) << ',' << format_number(table.iou(u, c)) << ','
                << table.images_considered(c) << '\n';
        }
    if (!out) throw ValidationError("cannot write " + path.string());
}

IoUTable read_iou_csv(const std::filesystem::path& path, const DatasetIndex* names) {
    CsvReader csv(path);
    const auto cu = csv.column("unit"), cc = csv.column("concept_id"), ccat = csv.column("category"),
               ci = csv.column("intersection"), cun = csv.column("union"), cim = csv.column("images_considered");
    struct Row {
        int unit;
        int concept_id;
        std::uint64_t inter, uni, images;
    };
    std::vector<Row> rows;
    std::map<int, Concept> concepts;
    int units = 0;
    csv.for_each([&](const std::vector<std::string>& row, std::size_t line) {
        Row r{};
        r.unit = static_cast<int>(parse_int(row[cu], csv.file(), line));
        r.concept_id = static_cast<int>(parse_int(row[cc], csv.file(), line));
        r.inter = static_cast<std::uint64_t>(parse_int(row[ci], csv.file(), line));
        r.uni = static_cast<std::uint64_t>(parse_int(row[cun], csv.file(), line));
        r.images = static_cast<std::uint64_t>(parse_int(row[cim], csv.file(), line));
        const auto cat = parse_category(row[ccat]);
        if (!cat) throw ParseError(csv.file(), line, "unknown category " + row[ccat]);
        if (r.unit < 0) throw ParseError(csv.file(), line, "negative unit");
        units = std::max(units, r.unit + 1);
        Concept c;
        c.id = r.concept_id;
        c.category = *cat;
        c.name = std::to_string(r.concept_id);
        if (names)
            if (const auto* known = names->find_concept(r.concept_id)) c = *known;
        concepts.emplace(c.id, c);
        rows.push_back(r);
    });
    std::vector<Concept> list;
    std::map<int, std::size_t> pos;
    for (auto& [id, c] : concepts) {
        pos[id] = list.size();
        list.push_back(c);
    }
    IoUTable table(units, list);
    for (const auto& r : rows) {
        table.set(r.unit, pos[r.concept_id], r.inter, r.uni);
        table.set_images_considered(pos[r.concept_id], r.images);
    }
    return table;
}

namespace {

constexpr char kCacheMagic[8] = {'N', 'D', 'I', 'O', 'U', '0', '0', '1'};

template <typename T>
void put(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& in, const std::string& file) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof value);
    if (!in) throw ParseError(file, 0, "truncated IoU cache");
    return value;
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& file) {
    const auto n = get<std::uint32_t>(in, file);
    if (n > (1u << 20)) throw ParseError(file, 0, "implausible string length in IoU cache");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw ParseError(file, 0, "truncated IoU cache");
    return s;
}

}  // namespace

// Host byte order is little-endian on every supported target; the cache is a
// local intermediate, not an interchange format.
void write_iou_cache(const IoUTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(kCacheMagic, sizeof kCacheMagic);
    put_string(out, table.layer);
    put<double>(out, table.tau);
    put<std::int32_t>(out, table.units());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(table.concept_count()));
    for (std::size_t c = 0; c < table.concept_count(); ++c) {
        const auto& con = table.concepts()[c];
        put<std::int32_t>(out, con.id);
        put<std::uint8_t>(out, static_cast<std::uint8_t>(con.category));
        put<std::int32_t>(out, con.sample_count);
        put_string(out, con.name);
        put<std::uint64_t>(out, table.images_considered(c));
    }
    for (int u = 0; u < table.units(); ++u)
        for (std::size_t c = 0; c < table.concept_count(); ++c) {
            put<std::uint64_t>(out, table.intersection(u, c));
            put<std::uint64_t>(out, table.union_count(u, c));
        }
    if (!out) throw ValidationError("cannot write " + path.string());
}

IoUTable read_iou_cache(const std::filesystem::path& path) {
    const auto file = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(file, 0, "cannot open file");
    char magic[sizeof kCacheMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) throw ParseError(file, 0, "not an IoU cache");
    const auto layer = get_string(in, file);
    const auto tau = get<double>(in, file);
    const auto units = get<std::int32_t>(in, file);
    const auto n = get<std::uint32_t>(in, file);
    if (units < 0) throw ParseError(file, 0, "negative unit count");
    std::vector<Concept> concepts(n);
    std::vector<std::uint64_t> images(n);
    for (std::uint32_t c = 0; c < n; ++c) {
        concepts[c].id = get<std::int32_t>(in, file);
        const auto cat = get<std::uint8_t>(in, file);
        if (cat >= kCategoryCount) throw ParseError(file, 0, "bad category code");
        concepts[c].category = static_cast<Category>(cat);
        concepts[c].sample_count = get<std::int32_t>(in, file);
        concepts[c].name = get_string(in, file);
        images[c] = get<std::uint64_t>(in, file);
    }
    IoUTable table(units, std::move(concepts));
    table.layer = layer;
    table.tau = tau;
    for (std::uint32_t c = 0; c < n; ++c) table.set_images_considered(c, images[c]);
    for (int u = 0; u < units; ++u)
        for (std::uint32_t c = 0; c < n; ++c) {
            const auto inter = get<std::uint64_t>(in, file);
            const auto uni = get<std::uint64_t>(in, file);
            table.set(u, c, inter, uni);
        }
    return table;
}

}  // namespace netdissect
