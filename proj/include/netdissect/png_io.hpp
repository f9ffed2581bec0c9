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

namespace netdissect {

/// Single-channel 16-bit image, row-major.
struct GrayImage16 {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> pixels;
};

/// Interleaved 8-bit RGB image, row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // 3 * width * height

    std::uint8_t* at(int y, int x) { return &pixels[3 * (static_cast<std::size_t>(y) * width + x)]; }
    const std::uint8_t* at(int y, int x) const { return &pixels[3 * (static_cast<std::size_t>(y) * width + x)]; }
};

/// Reads a grayscale PNG preserving raw sample values (8-bit files are widened,
/// no gamma handling). Palette and color files are rejected.
GrayImage16 read_png_gray16(const std::filesystem::path& path);

/// Reads any PNG and converts to 8-bit RGB.
RgbImage read_png_rgb(const std::filesystem::path& path);

void write_png_gray16(const std::filesystem::path& path, int width, int height,
                      std::span<const std::uint16_t> pixels);
void write_png_gray8(const std::filesystem::path& path, int width, int height,
                     std::span<const std::uint8_t> pixels);
void write_png_rgba8(const std::filesystem::path& path, int width, int height,
                     std::span<const std::uint8_t> pixels);
void write_png_rgb8(const std::filesystem::path& path, const RgbImage& image);

}  // namespace netdissect
