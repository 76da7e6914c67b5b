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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "covct/error.hpp"

namespace covct {

/// Patient-level (and slice-level) class. COVID is the positive class.
enum class PatientLabel { Covid, NonCovid };

inline std::string_view to_string(PatientLabel label) {
    return label == PatientLabel::Covid ? "covid" : "non-covid";
}

inline PatientLabel parse_label(std::string_view text) {
    if (text == "covid") return PatientLabel::Covid;
    if (text == "non-covid") return PatientLabel::NonCovid;
    throw Error(ErrorKind::UnknownLabel, "unknown label '" + std::string(text) + "'");
}

/// 8-bit grayscale image, row-major.
class SliceImage {
public:
    SliceImage() = default;

    SliceImage(std::size_t height, std::size_t width, std::vector<std::uint8_t> pixels)
        : height_(height), width_(width), pixels_(std::move(pixels)) {
        if (height_ < 1 || width_ < 1)
            throw Error(ErrorKind::DegenerateInput, "slice dimensions must be >= 1");
        if (pixels_.size() != height_ * width_)
            throw Error(ErrorKind::Validation,
                        "pixel buffer has " + std::to_string(pixels_.size()) + " values, expected " +
                            std::to_string(height_ * width_));
    }

    SliceImage(std::size_t height, std::size_t width, std::uint8_t fill = 0)
        : SliceImage(height, width, std::vector<std::uint8_t>(height * width, fill)) {}

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    const std::vector<std::uint8_t>& pixels() const noexcept { return pixels_; }

    std::uint8_t at(std::size_t row, std::size_t col) const { return pixels_[row * width_ + col]; }
    std::uint8_t& at(std::size_t row, std::size_t col) { return pixels_[row * width_ + col]; }

    friend bool operator==(const SliceImage&, const SliceImage&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// One patient's scan. Slices are in canonical order.
struct CtVolume {
    std::string patient_id;
    std::vector<SliceImage> slices;
    std::optional<PatientLabel> label;
};

} // namespace covct
