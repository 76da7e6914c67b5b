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

// Scores wire format: `patient_id,slice_index,prob_noncovid`, where
// slice_index is the ordinal within the kept (post-selection) slices.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "covct/csv.hpp"
#include "covct/error.hpp"

namespace covct {

struct SliceScore {
    std::string patient_id;
    std::size_t slice_index = 0;
    double prob_noncovid = 0.0;

    friend bool operator==(const SliceScore&, const SliceScore&) = default;
};

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view text, double& out) {
    if (text.empty()) return false;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

inline bool parse_index(std::string_view text, std::size_t& out) {
    if (text.empty()) return false;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

inline constexpr std::string_view kScoresHeader = "patient_id,slice_index,prob_noncovid";

/// Validated scores, in file order.
class ScoreSet {
public:
    ScoreSet() = default;

    /// Adds a row; throws on out-of-range probability or a repeated key.
    void add(SliceScore score, const std::string& where = "score") {
        if (!(score.prob_noncovid >= 0.0 && score.prob_noncovid <= 1.0))
            throw Error(ErrorKind::OutOfRange,
                        where + ": prob_noncovid " + format_double(score.prob_noncovid) + " outside [0,1]");
        if (!keys_.insert({score.patient_id, score.slice_index}).second)
            throw Error(ErrorKind::DuplicateId, where + ": duplicate key (" + score.patient_id + ", " +
                                                    std::to_string(score.slice_index) + ")");
        by_patient_[score.patient_id].push_back(rows_.size());
        rows_.push_back(std::move(score));
    }

    const std::vector<SliceScore>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }

    /// Rows for one patient, in file order.
    std::vector<SliceScore> for_patient(const std::string& patient_id) const {
        std::vector<SliceScore> out;
        if (auto it = by_patient_.find(patient_id); it != by_patient_.end())
            for (auto idx : it->second) out.push_back(rows_[idx]);
        return out;
    }

    /// Patient ids in first-seen order.
    std::vector<std::string> patients() const {
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (const auto& r : rows_)
            if (seen.insert(r.patient_id).second) out.push_back(r.patient_id);
        return out;
    }

private:
    std::vector<SliceScore> rows_;
    std::set<std::pair<std::string, std::size_t>> keys_;
    std::map<std::string, std::vector<std::size_t>> by_patient_;
};

inline ScoreSet parse_scores(std::string_view text, const std::string& source = "scores") {
    const csv::Table table = csv::parse(text, source);
    if (table.header != std::vector<std::string>{"patient_id", "slice_index", "prob_noncovid"})
        throw Error(ErrorKind::Parse, source + ":1: header must be '" + std::string(kScoresHeader) + "'");
    ScoreSet set;
    for (const auto& row : table.rows) {
        const std::string where = source + ":" + std::to_string(row.line);
        SliceScore s;
        s.patient_id = row.fields[0];
        if (s.patient_id.empty()) throw Error(ErrorKind::Parse, where + ": empty patient_id");
        if (!parse_index(row.fields[1], s.slice_index))
            throw Error(ErrorKind::Parse, where + ": bad slice_index '" + row.fields[1] + "'");
        if (!parse_double(row.fields[2], s.prob_noncovid))
            throw Error(ErrorKind::Parse, where + ": bad prob_noncovid '" + row.fields[2] + "'");
        set.add(std::move(s), where);
    }
    return set;
}

inline ScoreSet load_scores_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open scores file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_scores(buffer.str(), path.string());
}

inline void write_scores(std::ostream& out, const std::vector<SliceScore>& scores, bool header = true) {
    if (header) out << kScoresHeader << '\n';
    for (const auto& s : scores)
        out << s.patient_id << ',' << s.slice_index << ',' << format_double(s.prob_noncovid) << '\n';
}

inline std::string scores_to_csv(const std::vector<SliceScore>& scores) {
    std::ostringstream out;
    write_scores(out, scores);
    return out.str();
}

} // namespace covct
