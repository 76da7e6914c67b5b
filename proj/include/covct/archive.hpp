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

// Preprocessed tensor archive ("CTP1"), one patient per archive. All integers
// are unsigned 32-bit little endian, values are IEEE-754 binary32 little endian:
//
//   offset  size  field
//   0       4     magic "CTP1"
//   4       4     patient_id byte length L
//   8       L     patient_id (UTF-8, no terminator)
//   8+L     4     slice count S
//   12+L    4     height (224)
//   16+L    4     width (224)
//   20+L    4     channels (3)
//   24+L    ...   S*224*224*3 floats, slice-major, row-major, channel-last
//
// Several archives may be concatenated in one stream (the scorer subprocess
// protocol relies on this).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "covct/error.hpp"
#include "covct/preprocess.hpp"

namespace covct {

/// A patient's kept, preprocessed slices.
struct TensorBatch {
    std::string patient_id;
    std::vector<ModelInputTensor> slices;
};

namespace archive {

inline constexpr char kMagic[4] = {'C', 'T', 'P', '1'};
inline constexpr std::uint32_t kMaxIdLength = 4096;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Reads exactly n bytes; returns the count actually read.
inline std::size_t read_some(std::istream& in, std::uint8_t* dst, std::size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount());
}

inline void read_exact(std::istream& in, std::uint8_t* dst, std::size_t n, const char* what) {
    if (read_some(in, dst, n) != n) throw Error(ErrorKind::Parse, std::string("truncated archive while reading ") + what);
}

} // namespace detail

inline std::vector<std::uint8_t> encode_header(const TensorBatch& batch) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    detail::put_u32(out, static_cast<std::uint32_t>(batch.patient_id.size()));
    out.insert(out.end(), batch.patient_id.begin(), batch.patient_id.end());
    detail::put_u32(out, static_cast<std::uint32_t>(batch.slices.size()));
    detail::put_u32(out, ModelInputTensor::kHeight);
    detail::put_u32(out, ModelInputTensor::kWidth);
    detail::put_u32(out, ModelInputTensor::kChannels);
    return out;
}

inline void write(std::ostream& out, const TensorBatch& batch) {
    const auto header = encode_header(batch);
    out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    std::vector<std::uint8_t> buf(ModelInputTensor::kSize * 4);
    for (const auto& t : batch.slices) {
        const auto& v = t.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(v[i]);
            buf[4 * i + 0] = static_cast<std::uint8_t>(bits);
            buf[4 * i + 1] = static_cast<std::uint8_t>(bits >> 8);
            buf[4 * i + 2] = static_cast<std::uint8_t>(bits >> 16);
            buf[4 * i + 3] = static_cast<std::uint8_t>(bits >> 24);
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw Error(ErrorKind::Io, "failed writing archive for " + batch.patient_id);
}

inline std::vector<std::uint8_t> encode(const TensorBatch& batch) {
    std::ostringstream ss(std::ios::binary);
    write(ss, batch);
    const auto s = ss.str();
    return {s.begin(), s.end()};
}

/// Reads the next archive. Returns nullopt on clean end of stream (no bytes
/// left before the magic); anything short of a full archive is an error.
inline std::optional<TensorBatch> read_next(std::istream& in) {
    std::uint8_t magic[4];
    const std::size_t got = detail::read_some(in, magic, 4);
    if (got == 0) return std::nullopt;
    if (got != 4 || std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorKind::Parse, "bad archive magic");

    std::uint8_t word[4];
    detail::read_exact(in, word, 4, "id length");
    const std::uint32_t id_len = detail::get_u32(word);
    if (id_len > kMaxIdLength) throw Error(ErrorKind::Parse, "archive patient_id too long");
    TensorBatch batch;
    batch.patient_id.resize(id_len);
    detail::read_exact(in, reinterpret_cast<std::uint8_t*>(batch.patient_id.data()), id_len, "patient_id");

    std::uint8_t dims[16];
    detail::read_exact(in, dims, 16, "dimensions");
    const std::uint32_t count = detail::get_u32(dims);
    const std::uint32_t h = detail::get_u32(dims + 4);
    const std::uint32_t w = detail::get_u32(dims + 8);
    const std::uint32_t c = detail::get_u32(dims + 12);
    if (h != ModelInputTensor::kHeight || w != ModelInputTensor::kWidth || c != ModelInputTensor::kChannels)
        throw Error(ErrorKind::Parse, "archive dims " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                                          std::to_string(c) + " are not 224x224x3");

    std::vector<std::uint8_t> buf(ModelInputTensor::kSize * 4);
    batch.slices.reserve(count);
    for (std::uint32_t s = 0; s < count; ++s) {
        detail::read_exact(in, buf.data(), buf.size(), "tensor values");
        std::vector<float> values(ModelInputTensor::kSize);
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::bit_cast<float>(detail::get_u32(&buf[4 * i]));
        batch.slices.emplace_back(std::move(values));
    }
    return batch;
}

inline std::vector<TensorBatch> read_all(std::istream& in) {
    std::vector<TensorBatch> out;
    while (auto batch = read_next(in)) out.push_back(std::move(*batch));
    return out;
}

inline void save(const std::filesystem::path& path, const TensorBatch& batch) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    write(out, batch);
}

inline TensorBatch load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    auto batch = read_next(in);
    if (!batch) throw Error(ErrorKind::Parse, path.string() + ": empty archive");
    return std::move(*batch);
}

} // namespace archive
} // namespace covct
