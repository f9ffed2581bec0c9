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

#include "netdissect/checksum.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <limits>

#include <zlib.h>

#include "netdissect/errors.hpp"

namespace netdissect {

std::uint32_t crc32(std::span<const std::byte> bytes, std::uint32_t seed) noexcept {
    uLong crc = seed;
    const auto* data = reinterpret_cast<const Bytef*>(bytes.data());
    std::size_t remaining = bytes.size();
    while (remaining > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(remaining, std::numeric_limits<uInt>::max()));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        remaining -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::array<char, 1 << 16> buf;
    std::uint32_t crc = 0;
    while (in) {
        in.read(buf.data(), buf.size());
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got == 0) break;
        crc = crc32(std::as_bytes(std::span(buf.data(), got)), crc);
    }
    return crc;
}

std::string to_hex(std::uint32_t value) {
    char out[9];
    std::snprintf(out, sizeof out, "%08x", value);
    return out;
}

}  // namespace netdissect
