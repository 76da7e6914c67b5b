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

// Desk-scale synthetic CT data. Every slice is a 512x512 noisy torso
// ellipse with two darker lung fields. COVID patients additionally carry a
// bright checkered patch on the slices the default selection keeps; the
// patch sits entirely inside the default crop window.

#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "covct/dataset.hpp"
#include "covct/error.hpp"
#include "covct/image_io.hpp"
#include "covct/parallel.hpp"
#include "covct/preprocess.hpp"
#include "covct/types.hpp"

namespace covct::synth {

inline constexpr std::size_t kSide = 512;

/// Half-open pixel rectangle.
struct Rect {
    std::size_t top, left, bottom, right;
    bool contains(std::size_t r, std::size_t c) const noexcept {
        return r >= top && r < bottom && c >= left && c < right;
    }
};

/// Where COVID slices carry the planted signal.
inline constexpr Rect kSignalPatch{190, 150, 320, 362};

struct SynthOptions {
    std::size_t patients = 20;
    std::size_t slices_per_patient = 50;
    std::uint64_t seed = 7;
    std::size_t jobs = 1;
};

inline std::string patient_id(std::size_t index) {
    std::ostringstream s;
    s << 'P';
    s.width(3);
    s.fill('0');
    s << index + 1;
    return s.str();
}

/// Patients alternate COVID / NON_COVID starting with COVID.
inline PatientLabel patient_label(std::size_t index) {
    return index % 2 == 0 ? PatientLabel::Covid : PatientLabel::NonCovid;
}

inline SliceImage make_slice(std::uint64_t seed, std::size_t patient, std::size_t slice, bool with_signal) {
    // seed_seq and mt19937 are fully specified, and only raw engine output
    // is used, so pixels are identical on every conforming platform.
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(patient), static_cast<std::uint32_t>(slice)};
    std::mt19937 rng(seq);
    SliceImage img(kSide, kSide);
    const double cy = 256.0, cx = 256.0;
    for (std::size_t r = 0; r < kSide; ++r) {
        for (std::size_t c = 0; c < kSide; ++c) {
            const double dy = (static_cast<double>(r) - cy) / 200.0;
            const double dx = (static_cast<double>(c) - cx) / 236.0;
            const std::uint32_t noise = rng() % 16;
            unsigned v = 10 + noise;
            if (dx * dx + dy * dy <= 1.0) {
                v = 90 + noise;
                const double ly = (static_cast<double>(r) - 256.0) / 120.0;
                const double lxl = (static_cast<double>(c) - 170.0) / 70.0;
                const double lxr = (static_cast<double>(c) - 342.0) / 70.0;
                if (ly * ly + lxl * lxl <= 1.0 || ly * ly + lxr * lxr <= 1.0) v = 35 + noise;
            }
            if (with_signal && kSignalPatch.contains(r, c)) v = (((r / 8) + (c / 8)) % 2 == 0 ? 215 : 165) + noise;
            img.at(r, c) = static_cast<std::uint8_t>(v);
        }
    }
    return img;
}

/// Writes `<out>/<patient>/slice_<k>.png` and `<out>/manifest.csv` (paths
/// relative to `out`). Returns the manifest as written.
inline Manifest generate_synthetic_dataset(const std::filesystem::path& out, const SynthOptions& options) {
    if (options.patients < 2)
        throw Error(ErrorKind::Validation, "synthetic dataset needs at least 2 patients (one per class)");
    if (options.slices_per_patient < 1) throw Error(ErrorKind::Validation, "slices per patient must be >= 1");

    std::filesystem::create_directories(out);
    const SliceRange signal_range = central_slice_range(options.slices_per_patient, SelectionPolicy{});

    parallel_for(options.patients, options.jobs, [&](std::size_t p) {
        const auto dir = out / patient_id(p);
        std::filesystem::create_directories(dir);
        const bool covid = patient_label(p) == PatientLabel::Covid;
        for (std::size_t s = 0; s < options.slices_per_patient; ++s) {
            const bool signal = covid && s >= signal_range.first && s < signal_range.last;
            image_io::write_png(dir / ("slice_" + std::to_string(s) + ".png"), make_slice(options.seed, p, s, signal));
        }
    });

    std::ostringstream csv;
    csv << "patient_id,label,path\n";
    for (std::size_t p = 0; p < options.patients; ++p)
        csv << patient_id(p) << ',' << to_string(patient_label(p)) << ',' << patient_id(p) << '\n';
    const auto manifest_path = out / "manifest.csv";
    {
        std::ofstream f(manifest_path, std::ios::binary | std::ios::trunc);
        f << csv.str();
        if (!f) throw Error(ErrorKind::Io, "cannot write " + manifest_path.string());
    }
    return load_manifest(manifest_path, out);
}

} // namespace covct::synth
