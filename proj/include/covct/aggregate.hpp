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

// Slice labels from a probability threshold, patient verdicts by majority
// vote, and the threshold sweep.
//
// Decision rules:
//   slice is NON_COVID  iff  prob_noncovid > t   (strict)
//   patient is COVID    iff  covid_votes >= noncovid_votes   (ties -> COVID)

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "covct/csv.hpp"
#include "covct/error.hpp"
#include "covct/metrics.hpp"
#include "covct/scores.hpp"
#include "covct/types.hpp"

namespace covct {

class Threshold {
public:
    explicit Threshold(double t) : value_(t) {
        if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::OutOfRange, "threshold must be in [0,1], got " + format_double(t));
    }
    double value() const noexcept { return value_; }

private:
    double value_;
};

inline PatientLabel classify_slice(double prob_noncovid, Threshold t) {
    return prob_noncovid > t.value() ? PatientLabel::NonCovid : PatientLabel::Covid;
}

inline PatientLabel classify_slice(const SliceScore& score, Threshold t) {
    return classify_slice(score.prob_noncovid, t);
}

struct PatientDecision {
    std::string patient_id;
    double threshold = 0.0;
    std::size_t covid_votes = 0;
    std::size_t noncovid_votes = 0;
    PatientLabel verdict = PatientLabel::Covid;

    friend bool operator==(const PatientDecision&, const PatientDecision&) = default;
};

inline PatientDecision decide_patient(std::span<const SliceScore> scores, Threshold t) {
    if (scores.empty()) throw Error(ErrorKind::EmptyInput, "no slice scores for patient");
    PatientDecision d;
    d.patient_id = scores.front().patient_id;
    d.threshold = t.value();
    for (const auto& s : scores) {
        if (s.patient_id != d.patient_id)
            throw Error(ErrorKind::Validation, "scores mix patients '" + d.patient_id + "' and '" + s.patient_id + "'");
        (classify_slice(s, t) == PatientLabel::Covid ? d.covid_votes : d.noncovid_votes)++;
    }
    d.verdict = d.covid_votes >= d.noncovid_votes ? PatientLabel::Covid : PatientLabel::NonCovid;
    return d;
}

/// One decision per patient, in the score set's first-seen patient order.
inline std::vector<PatientDecision> decide_all(const ScoreSet& scores, Threshold t) {
    std::vector<PatientDecision> out;
    for (const auto& id : scores.patients()) out.push_back(decide_patient(scores.for_patient(id), t));
    return out;
}

inline constexpr std::string_view kDecisionsHeader = "patient_id,covid_votes,noncovid_votes,verdict";

inline std::string decisions_to_csv(const std::vector<PatientDecision>& decisions) {
    std::ostringstream out;
    out << kDecisionsHeader << '\n';
    for (const auto& d : decisions)
        out << d.patient_id << ',' << d.covid_votes << ',' << d.noncovid_votes << ',' << to_string(d.verdict) << '\n';
    return out.str();
}

/// Reads a decisions CSV. The threshold is not stored in the file.
inline std::vector<PatientDecision> parse_decisions(std::string_view text, const std::string& source = "decisions") {
    const auto table = csv::parse(text, source);
    if (table.header != std::vector<std::string>{"patient_id", "covid_votes", "noncovid_votes", "verdict"})
        throw Error(ErrorKind::Parse, source + ":1: header must be '" + std::string(kDecisionsHeader) + "'");
    std::vector<PatientDecision> out;
    for (const auto& row : table.rows) {
        const std::string where = source + ":" + std::to_string(row.line);
        PatientDecision d;
        d.patient_id = row.fields[0];
        if (!parse_index(row.fields[1], d.covid_votes) || !parse_index(row.fields[2], d.noncovid_votes))
            throw Error(ErrorKind::Parse, where + ": bad vote count");
        try {
            d.verdict = parse_label(row.fields[3]);
        } catch (const Error&) {
            throw Error(ErrorKind::UnknownLabel, where + ": unknown verdict '" + row.fields[3] + "'");
        }
        out.push_back(std::move(d));
    }
    return out;
}

inline std::vector<PatientDecision> load_decisions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open decisions file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_decisions(buffer.str(), path.string());
}

using TruthMap = std::map<std::string, std::optional<PatientLabel>>;

inline EvalReport evaluate_decisions(const std::vector<PatientDecision>& decisions, const TruthMap& truth,
                                     EvalOptions options = {}) {
    std::vector<std::pair<std::string, PatientLabel>> preds;
    preds.reserve(decisions.size());
    for (const auto& d : decisions) preds.emplace_back(d.patient_id, d.verdict);
    options.level = EvalLevel::Patient;
    return evaluate(preds, truth, options);
}

/// Every slice labeled by threshold, compared with its patient's label.
inline EvalReport evaluate_slices(const ScoreSet& scores, const TruthMap& truth, Threshold t, EvalOptions options = {}) {
    if (scores.size() == 0) throw Error(ErrorKind::EmptyInput, "nothing to evaluate");
    ConfusionMatrix cm;
    for (const auto& s : scores.rows()) {
        const auto it = truth.find(s.patient_id);
        if (it == truth.end())
            throw Error(ErrorKind::IdMismatch, "score for '" + s.patient_id + "' has no ground truth");
        if (!it->second) throw Error(ErrorKind::MissingLabel, "'" + s.patient_id + "' has no label");
        cm.add(classify_slice(s, t), *it->second);
    }
    options.level = EvalLevel::Slice;
    options.threshold = t.value();
    return evaluate(cm, options);
}

struct SweepRow {
    EvalReport report;
    bool best = false;
};

/// Patient-level evaluation at every threshold. Rows come back in
/// ascending threshold order; the row with the highest macro F1 (then
/// accuracy, then the lower threshold) is flagged best.
inline std::vector<SweepRow> sweep_thresholds(const ScoreSet& scores, const TruthMap& truth,
                                              std::vector<double> thresholds, const EvalOptions& options = {}) {
    if (thresholds.empty()) throw Error(ErrorKind::Validation, "threshold list is empty");
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    for (const auto& id : scores.patients()) {
        const auto it = truth.find(id);
        if (it == truth.end()) throw Error(ErrorKind::IdMismatch, "scored patient '" + id + "' has no ground truth");
        if (!it->second) throw Error(ErrorKind::MissingLabel, "scored patient '" + id + "' is unlabeled");
    }
    std::vector<SweepRow> rows;
    for (double value : thresholds) {
        const Threshold t(value);
        EvalOptions opts = options;
        opts.threshold = value;
        rows.push_back({evaluate_decisions(decide_all(scores, t), truth, opts), false});
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& a = rows[i].report;
        const auto& b = rows[best].report;
        if (a.macro_f1 > b.macro_f1 || (a.macro_f1 == b.macro_f1 && a.accuracy > b.accuracy)) best = i;
    }
    rows[best].best = true;
    return rows;
}

inline nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& row : rows) {
        auto j = to_json(row.report);
        j["best"] = row.best;
        arr.push_back(std::move(j));
    }
    return arr;
}

inline void print_sweep(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "threshold  accuracy          macro F1  n\n";
    for (const auto& row : rows) {
        const auto& r = row.report;
        out << "  " << format_fixed(r.threshold.value_or(0.0), 2) << "     "
            << format_interval(r.accuracy, r.ci_radius) << "  " << format_fixed(r.macro_f1) << "    " << r.n
            << (row.best ? "  <- best" : "") << "\n";
    }
}

} // namespace covct
