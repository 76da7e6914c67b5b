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

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "covct/csv.hpp"
#include "covct/error.hpp"
#include "covct/image_io.hpp"
#include "covct/types.hpp"

namespace covct {

struct ManifestEntry {
    std::string patient_id;
    PatientLabel label = PatientLabel::Covid;
    std::filesystem::path directory;
    std::string split; // empty when the manifest has no split column
};

struct LabelCounts {
    std::size_t covid = 0;
    std::size_t non_covid = 0;

    std::size_t total() const noexcept { return covid + non_covid; }
    friend bool operator==(const LabelCounts&, const LabelCounts&) = default;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    LabelCounts counts;
    std::map<std::string, LabelCounts> counts_by_split;

    const ManifestEntry* find(std::string_view patient_id) const {
        auto it = std::find_if(entries.begin(), entries.end(),
                               [&](const ManifestEntry& e) { return e.patient_id == patient_id; });
        return it == entries.end() ? nullptr : &*it;
    }
};

inline LabelCounts count_labels(const std::vector<ManifestEntry>& entries) {
    LabelCounts counts;
    for (const auto& e : entries) (e.label == PatientLabel::Covid ? counts.covid : counts.non_covid)++;
    return counts;
}

/// Parses manifest CSV text (`patient_id,label,path[,split]`). Relative paths
/// are resolved against `root`.
inline Manifest parse_manifest(std::string_view text, const std::filesystem::path& root,
                               const std::string& source = "manifest") {
    csv::Table table = csv::parse(text, source);
    const std::vector<std::string> base = {"patient_id", "label", "path"};
    const bool has_split = table.header.size() == 4 && table.header[3] == "split";
    if (!std::equal(base.begin(), base.end(), table.header.begin(), table.header.end() - (has_split ? 1 : 0)))
        throw Error(ErrorKind::Parse, source + ": header must be 'patient_id,label,path' (optional ',split')");
    if (table.rows.empty()) throw Error(ErrorKind::EmptyInput, source + ": manifest has no entries");

    Manifest manifest;
    std::set<std::string> seen;
    for (const auto& row : table.rows) {
        const std::string where = source + ":" + std::to_string(row.line);
        ManifestEntry entry;
        entry.patient_id = row.fields[0];
        if (entry.patient_id.empty()) throw Error(ErrorKind::Parse, where + ": empty patient_id");
        if (!seen.insert(entry.patient_id).second)
            throw Error(ErrorKind::DuplicateId, where + ": duplicate patient_id '" + entry.patient_id + "'");
        try {
            entry.label = parse_label(row.fields[1]);
        } catch (const Error&) {
            throw Error(ErrorKind::UnknownLabel, where + ": unknown label '" + row.fields[1] + "'");
        }
        std::filesystem::path dir = row.fields[2];
        entry.directory = dir.is_absolute() ? dir : root / dir;
        if (has_split) entry.split = row.fields[3];
        manifest.entries.push_back(std::move(entry));
    }
    manifest.counts = count_labels(manifest.entries);
    for (const auto& e : manifest.entries) {
        auto& c = manifest.counts_by_split[e.split];
        (e.label == PatientLabel::Covid ? c.covid : c.non_covid)++;
    }
    return manifest;
}

inline std::vector<std::string> list_slice_files(const std::filesystem::path& dir);

/// Loads and validates a manifest. When `root` is empty, paths resolve
/// against the manifest's own directory. With `check_directories`, every
/// entry must point at a directory holding at least one slice image.
inline Manifest load_manifest(const std::filesystem::path& path, const std::filesystem::path& root = {},
                              bool check_directories = true) {
    if (!std::filesystem::is_regular_file(path))
        throw Error(ErrorKind::Io, "manifest not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const auto base = root.empty() ? path.parent_path() : root;
    Manifest manifest = parse_manifest(buffer.str(), base, path.string());
    if (check_directories)
        for (const auto& e : manifest.entries) list_slice_files(e.directory);
    return manifest;
}

namespace detail {

// Digits at the end of the filename stem, if any.
inline std::optional<std::string> trailing_integer(const std::string& stem) {
    std::size_t end = stem.size();
    std::size_t begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
    if (begin == end) return std::nullopt;
    std::string digits = stem.substr(begin);
    const auto nz = digits.find_first_not_of('0');
    return nz == std::string::npos ? std::string("0") : digits.substr(nz);
}

} // namespace detail

/// Canonical slice order: ascending trailing integer of the stem, then
/// plain lexicographic on the filename. Names with a number sort before
/// names without one.
inline bool slice_name_less(const std::string& a, const std::string& b) {
    const auto stem_a = std::filesystem::path(a).stem().string();
    const auto stem_b = std::filesystem::path(b).stem().string();
    const auto na = detail::trailing_integer(stem_a);
    const auto nb = detail::trailing_integer(stem_b);
    if (na && nb && *na != *nb) {
        if (na->size() != nb->size()) return na->size() < nb->size();
        return *na < *nb;
    }
    if (na.has_value() != nb.has_value()) return na.has_value();
    return a < b;
}

inline bool is_supported_image_name(const std::string& name) {
    auto ext = std::filesystem::path(name).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Slice file names in a patient directory, canonically ordered. Hidden
/// files are skipped; any other non-image file is an error.
inline std::vector<std::string> list_slice_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Io, "not a directory: " + dir.string());
    std::vector<std::string> names;
    for (const auto& item : std::filesystem::directory_iterator(dir)) {
        if (!item.is_regular_file()) continue;
        auto name = item.path().filename().string();
        if (name.starts_with(".")) continue;
        if (!is_supported_image_name(name))
            throw Error(ErrorKind::UnsupportedFormat, (dir / name).string() + ": expected .png, .jpg or .jpeg");
        names.push_back(std::move(name));
    }
    if (names.empty()) throw Error(ErrorKind::EmptyInput, "no slice images in " + dir.string());
    std::sort(names.begin(), names.end(), slice_name_less);
    return names;
}

inline CtVolume load_volume(const ManifestEntry& entry) {
    CtVolume volume;
    volume.patient_id = entry.patient_id;
    volume.label = entry.label;
    for (const auto& name : list_slice_files(entry.directory))
        volume.slices.push_back(image_io::read_image(entry.directory / name));
    return volume;
}

/// Unlabeled load of a bare directory.
inline CtVolume load_volume(const std::string& patient_id, const std::filesystem::path& dir) {
    CtVolume volume = load_volume(ManifestEntry{patient_id, PatientLabel::Covid, dir, {}});
    volume.label.reset();
    return volume;
}

} // namespace covct
