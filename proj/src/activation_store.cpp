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

#include "netdissect/activation_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include "json.hpp"

#include "netdissect/checksum.hpp"
#include "netdissect/csv.hpp"
#include "netdissect/errors.hpp"

namespace netdissect {

static_assert(sizeof(float) == 4);

namespace {

constexpr const char* kMetaFile = "meta.json";
constexpr const char* kPayloadFile = "acts.bin";
constexpr const char* kIndexFile = "acts_index.csv";

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
}

void encode_floats(std::span<const float> values, std::vector<std::byte>& out) {
    out.resize(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = to_little_endian(std::bit_cast<std::uint32_t>(values[i]));
        std::memcpy(out.data() + 4 * i, &bits, 4);
    }
}

void decode_floats(const std::byte* in, std::span<float> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, in + 4 * i, 4);
        values[i] = std::bit_cast<float>(to_little_endian(bits));
    }
}

}  // namespace

RfGeometry default_geometry(int act_height, int act_width, int image_height, int image_width) {
    RfGeometry g;
    g.stride_y = static_cast<double>(image_height) / act_height;
    g.stride_x = static_cast<double>(image_width) / act_width;
    g.offset_y = g.stride_y / 2;
    g.offset_x = g.stride_x / 2;
    return g;
}

RfGeometry LayerMeta::geometry_for(int act_height, int act_width, int image_height, int image_width) const {
    return rf ? *rf : default_geometry(act_height, act_width, image_height, image_width);
}

std::string layer_meta_to_json(const LayerMeta& meta) {
    nlohmann::ordered_json j;
    j["layer_name"] = meta.layer_name;
    j["unit_count"] = meta.unit_count;
    j["dtype"] = meta.dtype;
    if (meta.rf) {
        j["rf_offset_y"] = meta.rf->offset_y;
        j["rf_offset_x"] = meta.rf->offset_x;
        j["rf_stride_y"] = meta.rf->stride_y;
        j["rf_stride_x"] = meta.rf->stride_x;
    }
    j["source_model"] = meta.source_model;
    j["checkpoint_tag"] = meta.checkpoint_tag;
    j["attributes"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : meta.attributes) j["attributes"][k] = v;
    return j.dump(2);
}

LayerMeta layer_meta_from_json(const std::string& text, const std::string& file) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(file, 0, e.what());
    }
    LayerMeta meta;
    try {
        meta.layer_name = j.value("layer_name", std::string());
        meta.unit_count = j.at("unit_count").get<int>();
        meta.dtype = j.value("dtype", std::string("float32"));
        meta.source_model = j.value("source_model", std::string());
        meta.checkpoint_tag = j.value("checkpoint_tag", std::string());
        const bool has_any_rf = j.contains("rf_stride_y") || j.contains("rf_stride_x") ||
                                j.contains("rf_offset_y") || j.contains("rf_offset_x");
        if (has_any_rf) {
            RfGeometry g;
            g.stride_y = j.at("rf_stride_y").get<double>();
            g.stride_x = j.at("rf_stride_x").get<double>();
            g.offset_y = j.value("rf_offset_y", g.stride_y / 2);
            g.offset_x = j.value("rf_offset_x", g.stride_x / 2);
            meta.rf = g;
        }
        if (j.contains("attributes"))
            for (const auto& [k, v] : j["attributes"].items())
                meta.attributes[k] = v.is_string() ? v.get<std::string>() : v.dump();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(file, 0, e.what());
    }
    if (meta.unit_count <= 0) throw ValidationError(file + ": unit_count must be positive");
    if (meta.dtype != "float32") throw ValidationError(file + ": unsupported dtype " + meta.dtype);
    if (meta.rf) {
        if (!(meta.rf->stride_y > 0) || !(meta.rf->stride_x > 0))
            throw ValidationError(file + ": rf strides must be positive");
        if (meta.rf->offset_y < 0 || meta.rf->offset_x < 0)
            throw ValidationError(file + ": rf offsets must be non-negative");
    }
    return meta;
}

// ---------------------------------------------------------------------------

std::uint64_t VolumeSource::total_locations() const {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        const auto [h, w] = dims(i);
        n += static_cast<std::uint64_t>(h) * w;
    }
    return n;
}

std::optional<std::size_t> VolumeSource::find(std::string_view id) const {
    for (std::size_t i = 0; i < size(); ++i)
        if (image_id(i) == id) return i;
    return std::nullopt;
}

void MemorySource::add(ActivationVolume volume) {
    if (volume.units != meta_.unit_count)
        throw UsageError("volume " + volume.image_id + " has " + std::to_string(volume.units) + " units, expected " +
                         std::to_string(meta_.unit_count));
    if (volume.values.size() != static_cast<std::size_t>(volume.units) * volume.plane_size())
        throw UsageError("volume " + volume.image_id + " payload size mismatch");
    volumes_.push_back(std::move(volume));
}

// ---------------------------------------------------------------------------

struct StoreWriter::Impl {
    std::filesystem::path root;
    LayerMeta meta;
    std::ofstream payload;
    std::ostringstream index;
    std::set<std::string> ids;
    std::uint64_t offset = 0;
    std::uint32_t crc = 0;
    std::size_t count = 0;
    bool finished = false;
    std::vector<std::byte> buffer;

    void cleanup() noexcept {
        std::error_code ec;
        payload.close();
        for (const char* name : {kMetaFile, kPayloadFile, kIndexFile}) std::filesystem::remove(root / name, ec);
    }
};

StoreWriter::StoreWriter(std::filesystem::path root, LayerMeta meta) : impl_(std::make_unique<Impl>()) {
    if (meta.unit_count <= 0) throw UsageError("unit_count must be positive");
    if (meta.rf && (!(meta.rf->stride_y > 0) || !(meta.rf->stride_x > 0)))
        throw UsageError("rf strides must be positive");
    if (meta.rf && (meta.rf->offset_y < 0 || meta.rf->offset_x < 0))
        throw UsageError("rf offsets must be non-negative");
    impl_->root = std::move(root);
    impl_->meta = std::move(meta);
    std::filesystem::create_directories(impl_->root);
    impl_->payload.open(impl_->root / kPayloadFile, std::ios::binary | std::ios::trunc);
    if (!impl_->payload) throw ValidationError("cannot create " + (impl_->root / kPayloadFile).string());
    impl_->index << "image_id,offset,height,width,crc32\n";
}

StoreWriter::~StoreWriter() {
    if (impl_ && !impl_->finished) impl_->cleanup();
}

void StoreWriter::append(const ActivationVolume& volume) {
    auto& s = *impl_;
    try {
        if (volume.units != s.meta.unit_count)
            throw ValidationError("volume " + volume.image_id + " has " + std::to_string(volume.units) +
                                  " units, expected " + std::to_string(s.meta.unit_count));
        if (volume.height <= 0 || volume.width <= 0)
            throw ValidationError("volume " + volume.image_id + " has empty spatial dims");
        if (volume.values.size() != static_cast<std::size_t>(volume.units) * volume.plane_size())
            throw ValidationError("volume " + volume.image_id + " payload size does not match dims");
        if (volume.image_id.empty() || volume.image_id.find_first_of(",\"\n") != std::string::npos)
            throw ValidationError("invalid image_id '" + volume.image_id + "'");
        if (!s.ids.insert(volume.image_id).second) throw ValidationError("duplicate image_id " + volume.image_id);
        for (std::size_t i = 0; i < volume.values.size(); ++i)
            if (!std::isfinite(volume.values[i]))
                throw ValidationError("non-finite activation in " + volume.image_id + " unit " +
                                      std::to_string(i / volume.plane_size()));

        encode_floats(volume.values, s.buffer);
        const auto record_crc = crc32(s.buffer);
        s.payload.write(reinterpret_cast<const char*>(s.buffer.data()), static_cast<std::streamsize>(s.buffer.size()));
        if (!s.payload) throw ValidationError("write failed for " + (s.root / kPayloadFile).string() + " (disk full?)");
        s.crc = crc32(s.buffer, s.crc);
        s.index << volume.image_id << ',' << s.offset << ',' << volume.height << ',' << volume.width << ','
                << to_hex(record_crc) << '\n';
        s.offset += s.buffer.size();
        ++s.count;
    } catch (...) {
        s.finished = true;
        s.cleanup();
        throw;
    }
}

StoreManifest StoreWriter::finish() {
    auto& s = *impl_;
    if (s.finished) throw UsageError("StoreWriter already finished");
    try {
        s.payload.flush();
        if (!s.payload) throw ValidationError("flush failed for " + (s.root / kPayloadFile).string());
        s.payload.close();

        std::ofstream index(s.root / kIndexFile, std::ios::trunc);
        index << s.index.str();
        if (!index) throw ValidationError("write failed for " + (s.root / kIndexFile).string());

        auto j = nlohmann::ordered_json::parse(layer_meta_to_json(s.meta));
        j["image_count"] = s.count;
        j["payload_bytes"] = s.offset;
        j["payload_crc32"] = to_hex(s.crc);
        std::ofstream meta(s.root / kMetaFile, std::ios::trunc);
        meta << j.dump(2) << '\n';
        if (!meta) throw ValidationError("write failed for " + (s.root / kMetaFile).string());
    } catch (...) {
        s.finished = true;
        s.cleanup();
        throw;
    }
    s.finished = true;
    return StoreManifest{s.root, s.meta, s.count, s.offset, s.crc};
}

StoreManifest write_store(const LayerMeta& meta, const VolumeSource& volumes, const std::filesystem::path& out) {
    StoreWriter writer(out, meta);
    for (std::size_t i = 0; i < volumes.size(); ++i) writer.append(volumes.read(i));
    return writer.finish();
}

StoreManifest write_store(const LayerMeta& meta, std::span<const ActivationVolume> volumes,
                          const std::filesystem::path& out) {
    StoreWriter writer(out, meta);
    for (const auto& v : volumes) writer.append(v);
    return writer.finish();
}

// ---------------------------------------------------------------------------

ActivationStore ActivationStore::open(const std::filesystem::path& root) {
    ActivationStore store;
    store.root_ = root;

    const auto meta_path = root / kMetaFile;
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw ParseError(meta_path.string(), 0, "cannot open file");
    std::stringstream text;
    text << meta_in.rdbuf();
    store.meta_ = layer_meta_from_json(text.str(), meta_path.string());

    std::uint64_t declared_bytes = 0;
    std::uint32_t declared_crc = 0;
    std::size_t declared_count = 0;
    try {
        const auto j = nlohmann::json::parse(text.str());
        declared_count = j.at("image_count").get<std::size_t>();
        declared_bytes = j.at("payload_bytes").get<std::uint64_t>();
        declared_crc = static_cast<std::uint32_t>(std::stoul(j.at("payload_crc32").get<std::string>(), nullptr, 16));
    } catch (const std::exception& e) {
        throw ParseError(meta_path.string(), 0, std::string("bad manifest fields: ") + e.what());
    }

    const std::size_t k = static_cast<std::size_t>(store.meta_.unit_count);
    CsvReader csv(root / kIndexFile);
    const auto c_id = csv.column("image_id"), c_off = csv.column("offset"), c_h = csv.column("height"),
               c_w = csv.column("width"), c_crc = csv.column("crc32");
    std::uint64_t expected_offset = 0;
    csv.for_each([&](const std::vector<std::string>& row, std::size_t line) {
        Record r;
        r.image_id = row[c_id];
        r.offset = static_cast<std::uint64_t>(parse_int(row[c_off], csv.file(), line));
        r.height = static_cast<int>(parse_int(row[c_h], csv.file(), line));
        r.width = static_cast<int>(parse_int(row[c_w], csv.file(), line));
        try {
            r.crc = static_cast<std::uint32_t>(std::stoul(row[c_crc], nullptr, 16));
        } catch (const std::exception&) {
            throw ParseError(csv.file(), line, "bad crc32 field");
        }
        if (r.height <= 0 || r.width <= 0) throw ParseError(csv.file(), line, "non-positive dims");
        if (r.offset != expected_offset)
            throw ValidationError(csv.file() + ":" + std::to_string(line) + ": offset " + std::to_string(r.offset) +
                                  " is not contiguous (expected " + std::to_string(expected_offset) + ")");
        expected_offset += 4 * k * static_cast<std::uint64_t>(r.height) * r.width;
        if (!store.by_id_.emplace(r.image_id, store.records_.size()).second)
            throw ValidationError(csv.file() + ":" + std::to_string(line) + ": duplicate image_id " + r.image_id);
        store.records_.push_back(std::move(r));
    });
    if (store.records_.size() != declared_count)
        throw ValidationError(meta_path.string() + ": image_count " + std::to_string(declared_count) +
                              " disagrees with index (" + std::to_string(store.records_.size()) + ")");
    if (expected_offset != declared_bytes)
        throw ValidationError(meta_path.string() + ": payload_bytes disagrees with index");

    const auto payload_path = root / kPayloadFile;
    const int fd = ::open(payload_path.c_str(), O_RDONLY);
    if (fd < 0) throw ParseError(payload_path.string(), 0, "cannot open file");
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        ::close(fd);
        throw ParseError(payload_path.string(), 0, "cannot stat file");
    }
    if (static_cast<std::uint64_t>(st.st_size) != declared_bytes) {
        ::close(fd);
        throw CorruptionError(payload_path.string() + ": size " + std::to_string(st.st_size) + " != manifest " +
                              std::to_string(declared_bytes));
    }
    if (declared_bytes > 0) {
        void* p = ::mmap(nullptr, declared_bytes, PROT_READ, MAP_PRIVATE, fd, 0);
        if (p == MAP_FAILED) {
            ::close(fd);
            throw ValidationError("mmap failed for " + payload_path.string());
        }
        ::madvise(p, declared_bytes, MADV_SEQUENTIAL);
        store.data_ = static_cast<const std::byte*>(p);
        store.mapped_bytes_ = declared_bytes;
    }
    ::close(fd);
    store.manifest_ = StoreManifest{root, store.meta_, store.records_.size(), declared_bytes, declared_crc};
    return store;
}

ActivationStore::ActivationStore(ActivationStore&& other) noexcept { *this = std::move(other); }

ActivationStore& ActivationStore::operator=(ActivationStore&& other) noexcept {
    if (this != &other) {
        if (data_) ::munmap(const_cast<std::byte*>(data_), mapped_bytes_);
        root_ = std::move(other.root_);
        meta_ = std::move(other.meta_);
        manifest_ = std::move(other.manifest_);
        records_ = std::move(other.records_);
        by_id_ = std::move(other.by_id_);
        data_ = std::exchange(other.data_, nullptr);
        mapped_bytes_ = std::exchange(other.mapped_bytes_, 0);
    }
    return *this;
}

ActivationStore::~ActivationStore() {
    if (data_) ::munmap(const_cast<std::byte*>(data_), mapped_bytes_);
}

ActivationVolume ActivationStore::read(std::size_t i) const {
    const auto& r = records_.at(i);
    ActivationVolume v(r.image_id, meta_.unit_count, r.height, r.width);
    const auto bytes = std::span(data_ + r.offset, v.values.size() * 4);
    if (crc32(bytes) != r.crc) throw CorruptionError("checksum mismatch in record " + r.image_id);
    decode_floats(bytes.data(), v.values);
    const auto plane = v.plane_size();
    for (std::size_t j = 0; j < v.values.size(); ++j)
        if (!std::isfinite(v.values[j]))
            throw ValidationError("non-finite activation in image " + r.image_id + " unit " +
                                  std::to_string(j / plane));
    return v;
}

ActivationVolume ActivationStore::read_volume(std::string_view image_id) const {
    const auto it = by_id_.find(std::string(image_id));
    if (it == by_id_.end()) throw UsageError("image " + std::string(image_id) + " not in store");
    return read(it->second);
}

void ActivationStore::verify() const {
    const auto crc = mapped_bytes_ ? crc32(std::span(data_, mapped_bytes_)) : 0u;
    if (crc != manifest_.payload_crc32)
        throw CorruptionError(root_.string() + ": payload checksum " + to_hex(crc) + " != manifest " +
                              to_hex(manifest_.payload_crc32));
}

}  // namespace netdissect
