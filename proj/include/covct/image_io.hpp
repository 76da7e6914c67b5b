//*****************************************************************************
// Copyright 2026 The covct Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//*****************************************************************************
#pragma once

// PNG / JPEG decoding into 8-bit grayscale, and PNG encoding.
// Multi-channel sources are reduced to gray by averaging R, G and B.

#include <algorithm>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "covct/error.hpp"
#include "covct/types.hpp"

namespace covct::image_io {

enum class Format { Png, Jpeg, Unknown };

inline Format sniff(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::equal(std::begin(png_sig), std::end(png_sig), bytes.begin()))
        return Format::Png;
    if (bytes.size() >= 3 && bytes[0] == 0xff && bytes[1] == 0xd8 && bytes[2] == 0xff)
        return Format::Jpeg;
    return Format::Unknown;
}

inline std::uint8_t average_rgb(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    // Rounded integer mean, exact and platform independent.
    return static_cast<std::uint8_t>((static_cast<unsigned>(r) + g + b + 1) / 3);
}

inline SliceImage decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorKind::CorruptImage, name + ": " + msg);
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const std::size_t height = image.height;
    const std::size_t width = image.width;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorKind::CorruptImage, name + ": " + msg);
    }
    if (!color) return SliceImage(height, width, std::move(buffer));

    std::vector<std::uint8_t> gray(height * width);
    for (std::size_t i = 0; i < gray.size(); ++i)
        gray[i] = average_rgb(buffer[3 * i], buffer[3 * i + 1], buffer[3 * i + 2]);
    return SliceImage(height, width, std::move(gray));
}

namespace detail {

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_error_exit_to_caller(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

extern "C" inline void jpeg_silent_output(j_common_ptr) {}

// Plain-C decode so that longjmp never skips a C++ destructor. Returns false
// and fills `message` on failure; on success `out` holds width*height*components.
inline bool jpeg_decode_raw(const std::uint8_t* data, std::size_t size, std::vector<std::uint8_t>& out,
                            std::size_t& height, std::size_t& width, int& components, std::string& message) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit_to_caller;
    err.base.output_message = jpeg_silent_output;
    err.message[0] = '\0';
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        message = err.message;
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
    jpeg_read_header(&cinfo, TRUE);
    if (cinfo.jpeg_color_space != JCS_GRAYSCALE) cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    height = cinfo.output_height;
    width = cinfo.output_width;
    components = cinfo.output_components;
    out.resize(height * width * static_cast<std::size_t>(components));
    const std::size_t stride = width * static_cast<std::size_t>(components);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.data() + cinfo.output_scanline * stride;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    // Truncated streams decode with a warning and fill the tail; treat as corrupt.
    const bool truncated = cinfo.err->num_warnings > 0;
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    if (truncated) {
        message = "truncated or damaged JPEG stream";
        return false;
    }
    return true;
}

} // namespace detail

inline SliceImage decode_jpeg(std::span<const std::uint8_t> bytes, const std::string& name) {
    std::vector<std::uint8_t> raw;
    std::size_t height = 0;
    std::size_t width = 0;
    int components = 0;
    std::string message;
    if (!detail::jpeg_decode_raw(bytes.data(), bytes.size(), raw, height, width, components, message))
        throw Error(ErrorKind::CorruptImage, name + ": " + message);
    if (components == 1) return SliceImage(height, width, std::move(raw));
    if (components != 3) throw Error(ErrorKind::UnsupportedFormat, name + ": unexpected JPEG channel count");
    std::vector<std::uint8_t> gray(height * width);
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = average_rgb(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]);
    return SliceImage(height, width, std::move(gray));
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline SliceImage decode(std::span<const std::uint8_t> bytes, const std::string& name) {
    switch (sniff(bytes)) {
    case Format::Png: return decode_png(bytes, name);
    case Format::Jpeg: return decode_jpeg(bytes, name);
    case Format::Unknown: break;
    }
    throw Error(ErrorKind::CorruptImage, name + ": not a PNG or JPEG stream");
}

inline SliceImage read_image(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return decode(bytes, path.string());
}

namespace detail {

extern "C" inline void png_append_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

extern "C" inline void png_flush_noop(png_structp) {}

extern "C" inline void png_error_to_caller(png_structp png, png_const_charp) {
    png_longjmp(png, 1);
}

// No C++ objects are created between setjmp and the last libpng call, so
// the longjmp on error cannot skip a destructor.
inline bool png_encode_raw(const std::uint8_t* pixels, std::size_t height, std::size_t width,
                           std::vector<std::uint8_t>& out) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_to_caller, nullptr);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_set_write_fn(png, &out, png_append_to_vector, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 1);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_SUB);
    png_write_info(png, info);
    for (std::size_t r = 0; r < height; ++r) png_write_row(png, pixels + r * width);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

} // namespace detail

/// Encodes an 8-bit grayscale PNG with fast compression. Output bytes
/// depend only on the pixels (for a given zlib build).
inline std::vector<std::uint8_t> encode_png(const SliceImage& slice) {
    std::vector<std::uint8_t> out;
    out.reserve(slice.pixels().size() / 2);
    if (!detail::png_encode_raw(slice.pixels().data(), slice.height(), slice.width(), out))
        throw Error(ErrorKind::Io, "png encode failed");
    return out;
}

inline void write_png(const std::filesystem::path& path, const SliceImage& slice) {
    const auto bytes = encode_png(slice);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

} // namespace covct::image_io
