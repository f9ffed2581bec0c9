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

#include "netdissect/png_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include <png.h>

#include "netdissect/errors.hpp"

namespace netdissect {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw ValidationError("cannot open PNG file " + path.string());
    return f;
}

[[noreturn]] void on_png_error(png_structp png, png_const_charp msg) {
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = msg;
    png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

class PngReader {
public:
    explicit PngReader(const std::filesystem::path& path) : path_(path), file_(open_file(path, "rb")) {
        png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error_, on_png_error, on_png_warning);
        if (!png_) throw ValidationError("png_create_read_struct failed");
        info_ = png_create_info_struct(png_);
        if (!info_) {
            png_destroy_read_struct(&png_, nullptr, nullptr);
            throw ValidationError("png_create_info_struct failed");
        }
    }
    ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;

    // Each public entry point owns its own setjmp frame.
    template <typename Fn>
    void run(Fn&& fn) {
        if (setjmp(png_jmpbuf(png_)))
            throw ValidationError("PNG decode failed for " + path_.string() + ": " + error_);
        png_init_io(png_, file_.get());
        png_read_info(png_, info_);
        fn(png_, info_);
    }

private:
    std::filesystem::path path_;
    FilePtr file_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
    std::string error_;
};

class PngWriter {
public:
    explicit PngWriter(const std::filesystem::path& path) : path_(path), file_(open_file(path, "wb")) {
        png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error_, on_png_error, on_png_warning);
        if (!png_) throw ValidationError("png_create_write_struct failed");
        info_ = png_create_info_struct(png_);
        if (!info_) {
            png_destroy_write_struct(&png_, nullptr);
            throw ValidationError("png_create_info_struct failed");
        }
    }
    ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;

    void write(int width, int height, int bit_depth, int color_type, std::size_t row_bytes,
               const std::uint8_t* data, bool swap16) {
        std::vector<png_bytep> rows(static_cast<std::size_t>(height));
        for (int y = 0; y < height; ++y)
            rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * row_bytes);
        if (setjmp(png_jmpbuf(png_)))
            throw ValidationError("PNG encode failed for " + path_.string() + ": " + error_);
        png_init_io(png_, file_.get());
        png_set_IHDR(png_, info_, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                     color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_set_compression_level(png_, 6);
        png_write_info(png_, info_);
        if (swap16) png_set_swap(png_);
        png_write_image(png_, rows.data());
        png_write_end(png_, nullptr);
    }

private:
    std::filesystem::path path_;
    FilePtr file_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
    std::string error_;
};

bool host_is_little_endian() {
    const std::uint16_t probe = 1;
    return *reinterpret_cast<const std::uint8_t*>(&probe) == 1;
}

}  // namespace

GrayImage16 read_png_gray16(const std::filesystem::path& path) {
    GrayImage16 out;
    PngReader reader(path);
    std::string bad;
    reader.run([&](png_structp png, png_infop info) {
        const auto color = png_get_color_type(png, info);
        const auto depth = png_get_bit_depth(png, info);
        if (color != PNG_COLOR_TYPE_GRAY) {
            bad = "expected grayscale PNG";
            return;
        }
        if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (depth == 16 && host_is_little_endian()) png_set_swap(png);
        png_read_update_info(png, info);
        out.width = static_cast<int>(png_get_image_width(png, info));
        out.height = static_cast<int>(png_get_image_height(png, info));
        const auto n = static_cast<std::size_t>(out.width) * out.height;
        out.pixels.resize(n);
        if (depth == 16) {
            std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
            for (int y = 0; y < out.height; ++y)
                rows[y] = reinterpret_cast<png_bytep>(out.pixels.data() + static_cast<std::size_t>(y) * out.width);
            png_read_image(png, rows.data());
        } else {
            std::vector<std::uint8_t> buf(n);
            std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
            for (int y = 0; y < out.height; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * out.width;
            png_read_image(png, rows.data());
            for (std::size_t i = 0; i < n; ++i) out.pixels[i] = buf[i];
        }
        png_read_end(png, nullptr);
    });
    if (!bad.empty()) throw ValidationError(path.string() + ": " + bad);
    return out;
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
    RgbImage out;
    PngReader reader(path);
    reader.run([&](png_structp png, png_infop info) {
        const auto color = png_get_color_type(png, info);
        if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
            if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
            png_set_gray_to_rgb(png);
        }
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
        png_read_update_info(png, info);
        out.width = static_cast<int>(png_get_image_width(png, info));
        out.height = static_cast<int>(png_get_image_height(png, info));
        out.pixels.resize(3 * static_cast<std::size_t>(out.width) * out.height);
        std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
        for (int y = 0; y < out.height; ++y) rows[y] = out.at(y, 0);
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    });
    return out;
}

void write_png_gray16(const std::filesystem::path& path, int width, int height,
                      std::span<const std::uint16_t> pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw UsageError("write_png_gray16: pixel count mismatch");
    PngWriter(path).write(width, height, 16, PNG_COLOR_TYPE_GRAY, 2 * static_cast<std::size_t>(width),
                          reinterpret_cast<const std::uint8_t*>(pixels.data()), host_is_little_endian());
}

void write_png_gray8(const std::filesystem::path& path, int width, int height,
                     std::span<const std::uint8_t> pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw UsageError("write_png_gray8: pixel count mismatch");
    PngWriter(path).write(width, height, 8, PNG_COLOR_TYPE_GRAY, static_cast<std::size_t>(width), pixels.data(),
                          false);
}

void write_png_rgba8(const std::filesystem::path& path, int width, int height,
                     std::span<const std::uint8_t> pixels) {
    if (pixels.size() != 4 * static_cast<std::size_t>(width) * height)
        throw UsageError("write_png_rgba8: pixel count mismatch");
    PngWriter(path).write(width, height, 8, PNG_COLOR_TYPE_RGBA, 4 * static_cast<std::size_t>(width),
                          pixels.data(), false);
}

void write_png_rgb8(const std::filesystem::path& path, const RgbImage& image) {
    if (image.pixels.size() != 3 * static_cast<std::size_t>(image.width) * image.height)
        throw UsageError("write_png_rgb8: pixel count mismatch");
    PngWriter(path).write(image.width, image.height, 8, PNG_COLOR_TYPE_RGB, 3 * static_cast<std::size_t>(image.width),
                          image.pixels.data(), false);
}

}  // namespace netdissect
