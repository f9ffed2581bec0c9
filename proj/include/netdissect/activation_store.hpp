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
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace netdissect {

/// Maps activation cell (i, j) to input pixel (offset_y + i*stride_y,
/// offset_x + j*stride_x), the center of the cell's receptive field.
struct RfGeometry {
    double offset_y = 0;
    double offset_x = 0;
    double stride_y = 1;
    double stride_x = 1;

    friend bool operator==(const RfGeometry&, const RfGeometry&) = default;
};

/// Geometry used when the exporter did not record one: stride is the input
/// size over the activation size per axis, offset is half a stride.
RfGeometry default_geometry(int act_height, int act_width, int image_height, int image_width);

struct LayerMeta {
    std::string layer_name;
    int unit_count = 0;
    std::string dtype = "float32";
    std::optional<RfGeometry> rf;
    std::string source_model;
    std::string checkpoint_tag;
    /// Free-form provenance (rotation seed, alpha, ...). Sorted for stable output.
    std::map<std::string, std::string> attributes;

    /// Geometry for one image: the recorded one, else default_geometry().
    RfGeometry geometry_for(int act_height, int act_width, int image_height, int image_width) const;

    friend bool operator==(const LayerMeta&, const LayerMeta&) = default;
};

/// K x H x W activations of one image, C row-major.
struct ActivationVolume {
    std::string image_id;
    int units = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values;

    ActivationVolume() = default;
    ActivationVolume(std::string id, int k, int h, int w)
        : image_id(std::move(id)), units(k), height(h), width(w),
          values(static_cast<std::size_t>(k) * h * w, 0.0f) {}

    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }
    std::span<float> unit(int k) noexcept { return {values.data() + k * plane_size(), plane_size()}; }
    std::span<const float> unit(int k) const noexcept { return {values.data() + k * plane_size(), plane_size()}; }
    float& at(int k, int y, int x) noexcept { return values[k * plane_size() + static_cast<std::size_t>(y) * width + x]; }
    float at(int k, int y, int x) const noexcept {
        return values[k * plane_size() + static_cast<std::size_t>(y) * width + x];
    }
};

/// Anything that yields per-image activation volumes in a fixed order.
class VolumeSource {
public:
    virtual ~VolumeSource() = default;

    virtual const LayerMeta& meta() const = 0;
    virtual std::size_t size() const = 0;
    virtual const std::string& image_id(std::size_t i) const = 0;
    /// (height, width) of record i without touching its payload.
    virtual std::pair<int, int> dims(std::size_t i) const = 0;
    virtual ActivationVolume read(std::size_t i) const = 0;

    int units() const { return meta().unit_count; }
    /// Spatial locations per unit across all records.
    std::uint64_t total_locations() const;
    std::optional<std::size_t> find(std::string_view image_id) const;
};

/// Volumes held in memory; used by fixtures and as a write-free staging area.
class MemorySource final : public VolumeSource {
public:
    explicit MemorySource(LayerMeta meta) : meta_(std::move(meta)) {}

    void add(ActivationVolume volume);

    const LayerMeta& meta() const override { return meta_; }
    LayerMeta& mutable_meta() { return meta_; }
    std::size_t size() const override { return volumes_.size(); }
    const std::string& image_id(std::size_t i) const override { return volumes_[i].image_id; }
    std::pair<int, int> dims(std::size_t i) const override { return {volumes_[i].height, volumes_[i].width}; }
    ActivationVolume read(std::size_t i) const override { return volumes_[i]; }
    const ActivationVolume& volume(std::size_t i) const { return volumes_[i]; }

private:
    LayerMeta meta_;
    std::vector<ActivationVolume> volumes_;
};

struct StoreManifest {
    std::filesystem::path root;
    LayerMeta meta;
    std::size_t image_count = 0;
    std::uint64_t payload_bytes = 0;
    std::uint32_t payload_crc32 = 0;
};

/// Streams volumes into meta.json / acts.bin / acts_index.csv. Partial files
/// are removed if the writer is destroyed before finish() or a write fails.
class StoreWriter {
public:
    StoreWriter(std::filesystem::path root, LayerMeta meta);
    ~StoreWriter();
    StoreWriter(const StoreWriter&) = delete;
    StoreWriter& operator=(const StoreWriter&) = delete;

    void append(const ActivationVolume& volume);
    StoreManifest finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

StoreManifest write_store(const LayerMeta& meta, const VolumeSource& volumes, const std::filesystem::path& out);
StoreManifest write_store(const LayerMeta& meta, std::span<const ActivationVolume> volumes,
                          const std::filesystem::path& out);

/// Read-only, memory-mapped view of a store on disk.
class ActivationStore final : public VolumeSource {
public:
    static ActivationStore open(const std::filesystem::path& root);

    ActivationStore(ActivationStore&&) noexcept;
    ActivationStore& operator=(ActivationStore&&) noexcept;
    ~ActivationStore() override;

    const LayerMeta& meta() const override { return meta_; }
    std::size_t size() const override { return records_.size(); }
    const std::string& image_id(std::size_t i) const override { return records_[i].image_id; }
    std::pair<int, int> dims(std::size_t i) const override { return {records_[i].height, records_[i].width}; }

    /// Exact stored values. Throws CorruptionError on a record checksum
    /// mismatch and ValidationError (naming image and unit) on NaN/Inf.
    ActivationVolume read(std::size_t i) const override;
    ActivationVolume read_volume(std::string_view image_id) const;

    const std::filesystem::path& root() const noexcept { return root_; }
    const StoreManifest& manifest() const noexcept { return manifest_; }

    /// Recomputes the whole-payload checksum against the manifest.
    void verify() const;

private:
    ActivationStore() = default;

    struct Record {
        std::string image_id;
        std::uint64_t offset = 0;
        int height = 0;
        int width = 0;
        std::uint32_t crc = 0;
    };

    std::filesystem::path root_;
    LayerMeta meta_;
    StoreManifest manifest_;
    std::vector<Record> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
    const std::byte* data_ = nullptr;
    std::size_t mapped_bytes_ = 0;
};

std::string layer_meta_to_json(const LayerMeta& meta);
LayerMeta layer_meta_from_json(const std::string& text, const std::string& file);

}  // namespace netdissect
