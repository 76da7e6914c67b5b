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

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "covct/error.hpp"
#include "covct/types.hpp"

namespace covct {

/// Binary confusion counts with COVID as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }

    void add(PatientLabel predicted, PatientLabel actual) {
        const bool pred_pos = predicted == PatientLabel::Covid;
        const bool true_pos = actual == PatientLabel::Covid;
        if (pred_pos && true_pos) ++tp;
        else if (pred_pos) ++fp;
        else if (true_pos) ++fn;
        else ++tn;
    }

    /// Same outcomes viewed with NON_COVID as the positive class.
    ConfusionMatrix swapped() const noexcept { return {tn, fn, tp, fp}; }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline void require_nonempty(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw Error(ErrorKind::EmptyInput, "confusion matrix is empty");
}

/// (TP + TN) / (TP + FP + TN + FN)
inline double accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

/// Per-class precision and recall, their class averages and the harmonic
/// mean of the two averages. A ratio with a zero denominator is 0 and its
/// flag is raised.
struct MacroF1 {
    double precision_covid = 0.0;
    double recall_covid = 0.0;
    double precision_noncovid = 0.0;
    double recall_noncovid = 0.0;
    bool precision_covid_undefined = false;
    bool recall_covid_undefined = false;
    bool precision_noncovid_undefined = false;
    bool recall_noncovid_undefined = false;

    double average_precision = 0.0;
    double average_recall = 0.0;
    double value = 0.0;
    bool undefined = false; // average precision + average recall == 0

    bool any_undefined() const noexcept {
        return undefined || precision_covid_undefined || recall_covid_undefined || precision_noncovid_undefined ||
               recall_noncovid_undefined;
    }
};

namespace detail {
inline double safe_ratio(std::size_t num, std::size_t den, bool& undefined) {
    undefined = den == 0;
    return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
} // namespace detail

/// Macro F1 as the harmonic mean of class-averaged precision and
/// class-averaged recall. This is not the mean of the per-class F1 scores;
/// the two disagree in general.
inline MacroF1 macro_f1_detail(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    MacroF1 m;
    m.precision_covid = detail::safe_ratio(cm.tp, cm.tp + cm.fp, m.precision_covid_undefined);
    m.recall_covid = detail::safe_ratio(cm.tp, cm.tp + cm.fn, m.recall_covid_undefined);
    m.precision_noncovid = detail::safe_ratio(cm.tn, cm.tn + cm.fn, m.precision_noncovid_undefined);
    m.recall_noncovid = detail::safe_ratio(cm.tn, cm.tn + cm.fp, m.recall_noncovid_undefined);
    m.average_precision = (m.precision_covid + m.precision_noncovid) / 2.0;
    m.average_recall = (m.recall_covid + m.recall_noncovid) / 2.0;
    const double denom = m.average_precision + m.average_recall;
    m.undefined = denom == 0.0;
    m.value = m.undefined ? 0.0 : 2.0 * m.average_precision * m.average_recall / denom;
    return m;
}

inline double macro_f1(const ConfusionMatrix& cm) { return macro_f1_detail(cm).value; }

/// Normal-approximation binomial interval radius: z * sqrt(p (1 - p) / n).
inline double ci_radius(double p, std::size_t n, double z = 1.96) {
    if (n == 0) throw Error(ErrorKind::EmptyInput, "confidence interval needs n >= 1");
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::OutOfRange, "proportion must be in [0,1]");
    if (!(z > 0.0)) throw Error(ErrorKind::OutOfRange, "z must be positive");
    return z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

enum class EvalLevel { Slice, Patient };

inline const char* to_string(EvalLevel level) { return level == EvalLevel::Slice ? "slice" : "patient"; }

struct EvalReport {
    EvalLevel level = EvalLevel::Patient;
    std::string split = "validation";
    std::optional<double> threshold;
    std::size_t n = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    bool macro_f1_undefined = false;
    double ci_radius = 0.0;
    double z = 1.96;
    ConfusionMatrix confusion;
};

struct EvalOptions {
    EvalLevel level = EvalLevel::Patient;
    std::string split = "validation";
    std::optional<double> threshold;
    double z = 1.96;
};

inline EvalReport evaluate(const ConfusionMatrix& cm, const EvalOptions& options = {}) {
    EvalReport r;
    r.level = options.level;
    r.split = options.split;
    r.threshold = options.threshold;
    r.z = options.z;
    r.confusion = cm;
    r.n = cm.total();
    r.accuracy = accuracy(cm);
    const auto f1 = macro_f1_detail(cm);
    r.macro_f1 = f1.value;
    r.macro_f1_undefined = f1.undefined;
    r.ci_radius = ci_radius(r.accuracy, r.n, r.z);
    return r;
}

/// Joins predictions with ground truth by id. Every prediction needs a truth
/// entry (else id-mismatch) carrying a label (else missing-label).
inline EvalReport evaluate(const std::vector<std::pair<std::string, PatientLabel>>& predictions,
                           const std::map<std::string, std::optional<PatientLabel>>& truth,
                           const EvalOptions& options = {}) {
    if (predictions.empty()) throw Error(ErrorKind::EmptyInput, "nothing to evaluate");
    ConfusionMatrix cm;
    for (const auto& [id, predicted] : predictions) {
        const auto it = truth.find(id);
        if (it == truth.end()) throw Error(ErrorKind::IdMismatch, "prediction for '" + id + "' has no ground truth");
        if (!it->second) throw Error(ErrorKind::MissingLabel, "'" + id + "' has no label");
        cm.add(predicted, *it->second);
    }
    return evaluate(cm, options);
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["level"] = to_string(r.level);
    j["split"] = r.split;
    j["threshold"] = r.threshold ? nlohmann::json(*r.threshold) : nlohmann::json(nullptr);
    j["n"] = r.n;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    j["macro_f1_undefined"] = r.macro_f1_undefined;
    j["ci_radius"] = r.ci_radius;
    j["z"] = r.z;
    j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}};
    return j;
}

inline std::string format_fixed(double value, int decimals = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return buf;
}

/// "0.8848 ± 0.0036"
inline std::string format_interval(double value, double radius, int decimals = 4) {
    return format_fixed(value, decimals) + " ± " + format_fixed(radius, decimals);
}

inline void print_report(std::ostream& out, const EvalReport& r) {
    out << to_string(r.level) << "-level evaluation (" << r.split << ")";
    if (r.threshold) out << ", threshold " << format_fixed(*r.threshold, 2);
    out << "\n"
        << "  n          " << r.n << "\n"
        << "  accuracy   " << format_interval(r.accuracy, r.ci_radius) << "  (z = " << format_fixed(r.z, 2) << ")\n"
        << "  macro F1   " << format_fixed(r.macro_f1) << (r.macro_f1_undefined ? "  (undefined)" : "") << "\n"
        << "  confusion  tp " << r.confusion.tp << "  fp " << r.confusion.fp << "  tn " << r.confusion.tn << "  fn "
        << r.confusion.fn << "\n";
}

} // namespace covct
