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

// Pipeline configuration and its TOML-style file format:
//
//   # comment
//   root = "data"
//   manifest = "data/manifest.csv"
//   keep_fraction = 0.6
//   crop = "227x300"
//   thresholds = [0.5, 0.6, 0.7, 0.8]
//
// Only flat `key = value` pairs; values are quoted strings, numbers,
// booleans, or arrays of numbers.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "covct/error.hpp"
#include "covct/preprocess.hpp"
#include "covct/scorer.hpp"
#include "covct/scores.hpp"

namespace covct {

enum class BackendKind { Baseline, File, Subprocess };

inline BackendKind parse_backend(std::string_view s) {
    if (s == "baseline") return BackendKind::Baseline;
    if (s == "file") return BackendKind::File;
    if (s == "subprocess") return BackendKind::Subprocess;
    throw Error(ErrorKind::Validation, "backend: expected baseline, file or subprocess, got '" + std::string(s) + "'");
}

inline const char* to_string(BackendKind b) {
    switch (b) {
    case BackendKind::Baseline: return "baseline";
    case BackendKind::File: return "file";
    case BackendKind::Subprocess: return "subprocess";
    }
    return "?";
}

struct PipelineConfig {
    std::filesystem::path root;
    std::filesystem::path manifest;
    std::filesystem::path out = "covct-out";
    SelectionPolicy selection;
    CropSpec crop;

    BackendKind backend = BackendKind::Baseline;
    std::filesystem::path scores_file;          // file backend
    std::string scorer_command;                 // subprocess backend
    std::chrono::seconds scorer_timeout = std::chrono::seconds(600);
    std::filesystem::path model;                // baseline: reuse a saved model
    std::filesystem::path train_manifest;       // baseline: training set (defaults to manifest)
    TrainOptions training;

    double threshold = 0.7;
    std::vector<double> thresholds = {0.5, 0.6, 0.7, 0.8};
    double z = 1.96;
    std::string split = "validation";
    std::size_t jobs = 1;
    std::uint64_t seed = 7;

    /// Field-named errors; runs before any work.
    void validate() const {
        auto fail = [](const std::string& field, const std::string& why) {
            throw Error(ErrorKind::Validation, field + ": " + why);
        };
        if (manifest.empty()) fail("manifest", "is required");
        if (!std::filesystem::is_regular_file(manifest)) fail("manifest", "file not found: " + manifest.string());
        if (!root.empty() && !std::filesystem::is_directory(root)) fail("root", "directory not found: " + root.string());
        if (!(selection.keep_fraction > 0.0 && selection.keep_fraction <= 1.0))
            fail("keep_fraction", "must be in (0, 1], got " + format_double(selection.keep_fraction));
        if (crop.crop_height < 2 || crop.crop_width < 2) fail("crop", "window must be at least 2x2");
        if (!(threshold >= 0.0 && threshold <= 1.0)) fail("threshold", "must be in [0, 1]");
        if (thresholds.empty()) fail("thresholds", "must not be empty");
        for (double t : thresholds)
            if (!(t >= 0.0 && t <= 1.0)) fail("thresholds", "value " + format_double(t) + " outside [0, 1]");
        if (!(z > 0.0)) fail("z", "must be positive");
        if (jobs < 1) fail("jobs", "must be >= 1");
        if (out.empty()) fail("out", "is required");
        switch (backend) {
        case BackendKind::File:
            if (scores_file.empty() || !std::filesystem::is_regular_file(scores_file))
                fail("scores_file", "file backend needs an existing scores CSV");
            break;
        case BackendKind::Subprocess:
            if (scorer_command.empty()) fail("scorer_command", "subprocess backend needs a command");
            if (scorer_timeout.count() <= 0) fail("scorer_timeout", "must be positive");
            break;
        case BackendKind::Baseline:
            if (!model.empty() && !std::filesystem::is_regular_file(model))
                fail("model", "file not found: " + model.string());
            if (!train_manifest.empty() && !std::filesystem::is_regular_file(train_manifest))
                fail("train_manifest", "file not found: " + train_manifest.string());
            if (training.epochs < 1) fail("epochs", "must be >= 1");
            if (!(training.learning_rate > 0.0)) fail("learning_rate", "must be positive");
            break;
        }
    }
};

/// "227x300" -> (227, 300)
inline std::pair<std::size_t, std::size_t> parse_dims(std::string_view text) {
    const auto x = text.find('x');
    std::size_t h = 0, w = 0;
    if (x == std::string_view::npos || !parse_index(text.substr(0, x), h) || !parse_index(text.substr(x + 1), w))
        throw Error(ErrorKind::Validation, "crop: expected HEIGHTxWIDTH, got '" + std::string(text) + "'");
    return {h, w};
}

/// "142,106" -> (142, 106)
inline std::pair<std::size_t, std::size_t> parse_offset(std::string_view text) {
    const auto c = text.find(',');
    std::size_t top = 0, left = 0;
    if (c == std::string_view::npos || !parse_index(text.substr(0, c), top) || !parse_index(text.substr(c + 1), left))
        throw Error(ErrorKind::Validation, "crop_offset: expected TOP,LEFT, got '" + std::string(text) + "'");
    return {top, left};
}

/// "0.5,0.6" or "[0.5, 0.6]" -> {0.5, 0.6}
inline std::vector<double> parse_number_list(std::string_view text, const std::string& field) {
    std::string s(text);
    s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '[' || c == ']' || c == ' ' || c == '\t'; }),
            s.end());
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        double v = 0.0;
        if (!parse_double(item, v)) throw Error(ErrorKind::Validation, field + ": bad number '" + item + "'");
        out.push_back(v);
    }
    return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string unquote(const std::string& v) {
    if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) return v.substr(1, v.size() - 2);
    return v;
}

inline bool parse_bool(const std::string& v, const std::string& field) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw Error(ErrorKind::Validation, field + ": expected true or false");
}

inline double number(const std::string& v, const std::string& field) {
    double d = 0.0;
    if (!parse_double(v, d)) throw Error(ErrorKind::Validation, field + ": expected a number, got '" + v + "'");
    return d;
}

inline std::size_t count(const std::string& v, const std::string& field) {
    std::size_t n = 0;
    if (!parse_index(v, n)) throw Error(ErrorKind::Validation, field + ": expected a non-negative integer, got '" + v + "'");
    return n;
}

} // namespace detail

/// Applies one key to the config. Path values are taken verbatim.
inline void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& raw) {
    const std::string v = detail::unquote(raw);
    if (key == "root") cfg.root = v;
    else if (key == "manifest") cfg.manifest = v;
    else if (key == "out") cfg.out = v;
    else if (key == "keep_fraction") cfg.selection.keep_fraction = detail::number(v, key);
    else if (key == "crop") std::tie(cfg.crop.crop_height, cfg.crop.crop_width) = parse_dims(v);
    else if (key == "crop_offset") {
        const auto [top, left] = parse_offset(v);
        cfg.crop.top = top;
        cfg.crop.left = left;
    } else if (key == "strict_dims") cfg.crop.strict_dims = detail::parse_bool(v, key);
    else if (key == "backend") cfg.backend = parse_backend(v);
    else if (key == "scores_file") cfg.scores_file = v;
    else if (key == "scorer_command") cfg.scorer_command = v;
    else if (key == "scorer_timeout") cfg.scorer_timeout = std::chrono::seconds(detail::count(v, key));
    else if (key == "model") cfg.model = v;
    else if (key == "train_manifest") cfg.train_manifest = v;
    else if (key == "epochs") cfg.training.epochs = detail::count(v, key);
    else if (key == "learning_rate") cfg.training.learning_rate = detail::number(v, key);
    else if (key == "momentum") cfg.training.momentum = detail::number(v, key);
    else if (key == "threshold") cfg.threshold = detail::number(v, key);
    else if (key == "thresholds") cfg.thresholds = parse_number_list(v, key);
    else if (key == "z") cfg.z = detail::number(v, key);
    else if (key == "split") cfg.split = v;
    else if (key == "jobs") cfg.jobs = detail::count(v, key);
    else if (key == "seed") cfg.seed = detail::count(v, key);
    else throw Error(ErrorKind::Validation, "unknown config key '" + key + "'");
}

inline PipelineConfig parse_config(std::string_view text, const std::string& source = "config",
                                   PipelineConfig base = {}) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        // Strip comments outside quotes.
        bool quoted = false;
        std::size_t cut = line.size();
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                cut = i;
                break;
            }
        }
        const std::string body = detail::trim(line.substr(0, cut));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::Parse, source + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        try {
            apply_setting(base, key, value);
        } catch (const Error& e) {
            throw Error(e.kind(), source + ":" + std::to_string(line_no) + ": " + e.message());
        }
    }
    return base;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Validation, "config: file not found: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.string(), std::move(base));
}

} // namespace covct
