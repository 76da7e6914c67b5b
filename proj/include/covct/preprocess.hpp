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

// Slice preparation: keep the central part of the stack, crop every kept
// slice to a fixed lung window, then resize to the 224x224x3 model input.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "covct/error.hpp"
#include "covct/types.hpp"

namespace covct {

struct SelectionPolicy {
    double keep_fraction = 0.6;

    void validate() const {
        if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
            throw Error(ErrorKind::Validation,
                        "keep_fraction must be in (0, 1], got " + std::to_string(keep_fraction));
    }
};

/// Index range [first, last) of the slices kept by the policy.
struct SliceRange {
    std::size_t first = 0;
    std::size_t last = 0;

    std::size_t size() const noexcept { return last - first; }
    friend bool operator==(const SliceRange&, const SliceRange&) = default;
};

/// Slices removed from each end: floor(((1 - keep) / 2) * n). The 1e-9 snap
/// absorbs binary rounding of decimal fractions such as 0.6 so that the
/// count matches the exact decimal arithmetic for any realistic n.
inline std::size_t slices_trimmed_per_end(std::size_t n, const SelectionPolicy& policy) {
    policy.validate();
    const double exact = (1.0 - policy.keep_fraction) / 2.0 * static_cast<double>(n);
    return static_cast<std::size_t>(std::floor(exact + 1e-9));
}

inline SliceRange central_slice_range(std::size_t n, const SelectionPolicy& policy) {
    if (n == 0) throw Error(ErrorKind::EmptyInput, "cannot select slices from an empty volume");
    const std::size_t r = slices_trimmed_per_end(n, policy);
    if (2 * r >= n) return {n / 2, n / 2 + 1};
    return {r, n - r};
}

inline CtVolume select_central_slices(const CtVolume& volume, const SelectionPolicy& policy) {
    const SliceRange range = central_slice_range(volume.slices.size(), policy);
    CtVolume kept;
    kept.patient_id = volume.patient_id;
    kept.label = volume.label;
    kept.slices.assign(volume.slices.begin() + static_cast<std::ptrdiff_t>(range.first),
                       volume.slices.begin() + static_cast<std::ptrdiff_t>(range.last));
    return kept;
}

struct CropWindow {
    std::size_t top = 0;
    std::size_t left = 0;
    std::size_t crop_height = 227;
    std::size_t crop_width = 300;

    bool fits(std::size_t height, std::size_t width) const noexcept {
        return crop_height >= 1 && crop_width >= 1 && top + crop_height <= height && left + crop_width <= width;
    }

    std::string describe() const {
        return std::to_string(crop_height) + "x" + std::to_string(crop_width) + "@" + std::to_string(top) + "," +
               std::to_string(left);
    }

    friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

/// How to derive a CropWindow for each slice.
struct CropSpec {
    std::size_t crop_height = 227;
    std::size_t crop_width = 300;
    std::optional<std::size_t> top;  // explicit offsets override centering
    std::optional<std::size_t> left;
    bool strict_dims = false;        // reject anything that is not 512x512

    static constexpr std::size_t kExpectedSide = 512;
};

/// Centered window of the requested size, clamped to the image.
inline CropWindow centered_window(std::size_t height, std::size_t width, std::size_t crop_height = 227,
                                  std::size_t crop_width = 300) {
    const std::size_t ch = std::min(crop_height, height);
    const std::size_t cw = std::min(crop_width, width);
    return {(height - ch) / 2, (width - cw) / 2, ch, cw};
}

inline CropWindow resolve_window(const CropSpec& spec, std::size_t height, std::size_t width) {
    if (spec.strict_dims && (height != CropSpec::kExpectedSide || width != CropSpec::kExpectedSide))
        throw Error(ErrorKind::Validation, "strict mode expects 512x512 slices, got " + std::to_string(height) +
                                               "x" + std::to_string(width));
    if (spec.top || spec.left) {
        CropWindow w = centered_window(height, width, spec.crop_height, spec.crop_width);
        w.crop_height = spec.crop_height;
        w.crop_width = spec.crop_width;
        if (spec.top) w.top = *spec.top;
        if (spec.left) w.left = *spec.left;
        return w;
    }
    return centered_window(height, width, spec.crop_height, spec.crop_width);
}

/// Exact pixel copy of the window; no interpolation.
inline SliceImage crop_slice(const SliceImage& slice, const CropWindow& window) {
    if (!window.fits(slice.height(), slice.width()))
        throw Error(ErrorKind::OutOfBounds, "crop window " + window.describe() + " does not fit slice " +
                                                std::to_string(slice.height()) + "x" +
                                                std::to_string(slice.width()));
    std::vector<std::uint8_t> out(window.crop_height * window.crop_width);
    const auto& src = slice.pixels();
    for (std::size_t r = 0; r < window.crop_height; ++r) {
        const auto* row = src.data() + (window.top + r) * slice.width() + window.left;
        std::copy(row, row + window.crop_width, out.begin() + static_cast<std::ptrdiff_t>(r * window.crop_width));
    }
    return SliceImage(window.crop_height, window.crop_width, std::move(out));
}

/// 224x224x3 float tensor, row-major, channel-last, values in [0, 1].
class ModelInputTensor {
public:
    static constexpr std::size_t kHeight = 224;
    static constexpr std::size_t kWidth = 224;
    static constexpr std::size_t kChannels = 3;
    static constexpr std::size_t kSize = kHeight * kWidth * kChannels;

    ModelInputTensor() : values_(kSize, 0.0f) {}

    explicit ModelInputTensor(std::vector<float> values) : values_(std::move(values)) {
        if (values_.size() != kSize)
            throw Error(ErrorKind::Validation, "tensor needs " + std::to_string(kSize) + " values, got " +
                                                   std::to_string(values_.size()));
    }

    float at(std::size_t row, std::size_t col, std::size_t channel) const {
        return values_[(row * kWidth + col) * kChannels + channel];
    }

    const std::vector<float>& values() const noexcept { return values_; }

    friend bool operator==(const ModelInputTensor&, const ModelInputTensor&) = default;

private:
    std::vector<float> values_;
};

namespace detail {

// Half-pixel-center bilinear taps ("align corners" off): destination pixel d
// samples source coordinate (d + 0.5) * in / out - 0.5, clamped to the edge.
struct Tap {
    std::size_t i0;
    std::size_t i1;
    double frac;
};

inline std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
        double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(s));
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        taps[d] = {i0, i1, s - static_cast<double>(i0)};
    }
    return taps;
}

} // namespace detail

/// Resizes the `window` region of `slice` straight to the model input,
/// without materializing the crop.
inline ModelInputTensor to_model_input(const SliceImage& slice, const CropWindow& window) {
    if (!window.fits(slice.height(), slice.width()))
        throw Error(ErrorKind::OutOfBounds, "crop window " + window.describe() + " does not fit slice " +
                                                std::to_string(slice.height()) + "x" +
                                                std::to_string(slice.width()));
    if (window.crop_height < 2 || window.crop_width < 2)
        throw Error(ErrorKind::DegenerateInput, "resize input must be at least 2x2, got " +
                                                    std::to_string(window.crop_height) + "x" +
                                                    std::to_string(window.crop_width));
    constexpr std::size_t H = ModelInputTensor::kHeight;
    constexpr std::size_t W = ModelInputTensor::kWidth;
    constexpr std::size_t C = ModelInputTensor::kChannels;
    const auto rows = detail::bilinear_taps(window.crop_height, H);
    const auto cols = detail::bilinear_taps(window.crop_width, W);

    std::vector<float> values(ModelInputTensor::kSize);
    for (std::size_t y = 0; y < H; ++y) {
        const auto& ty = rows[y];
        const std::size_t r0 = window.top + ty.i0;
        const std::size_t r1 = window.top + ty.i1;
        for (std::size_t x = 0; x < W; ++x) {
            const auto& tx = cols[x];
            const std::size_t c0 = window.left + tx.i0;
            const std::size_t c1 = window.left + tx.i1;
            const double top = slice.at(r0, c0) + (slice.at(r0, c1) - static_cast<double>(slice.at(r0, c0))) * tx.frac;
            const double bot = slice.at(r1, c0) + (slice.at(r1, c1) - static_cast<double>(slice.at(r1, c0))) * tx.frac;
            const double v = top + (bot - top) * ty.frac;
            const auto scaled = static_cast<float>(std::clamp(v / 255.0, 0.0, 1.0));
            float* px = values.data() + (y * W + x) * C;
            px[0] = px[1] = px[2] = scaled;
        }
    }
    return ModelInputTensor(std::move(values));
}

inline ModelInputTensor to_model_input(const SliceImage& slice) {
    return to_model_input(slice, CropWindow{0, 0, slice.height(), slice.width()});
}

/// Select, crop and resize a whole volume. Output order follows the kept
/// slices. Windows are resolved per slice so mixed-size stacks work.
inline std::vector<ModelInputTensor> preprocess_volume(const CtVolume& volume, const SelectionPolicy& policy,
                                                       const CropSpec& crop) {
    const SliceRange range = central_slice_range(volume.slices.size(), policy);
    std::vector<ModelInputTensor> out;
    out.reserve(range.size());
    for (std::size_t i = range.first; i < range.last; ++i) {
        const auto& slice = volume.slices[i];
        out.push_back(to_model_input(slice, resolve_window(crop, slice.height(), slice.width())));
    }
    return out;
}

} // namespace covct
