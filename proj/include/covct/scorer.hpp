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

// Per-slice non-COVID probability. Three interchangeable backends:
//  - FileScorer       replays a precomputed scores CSV,
//  - BaselineScorer   logistic regression on a 16x16 intensity grid,
//  - SubprocessScorer pipes the tensor archive through an external command.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "covct/archive.hpp"
#include "covct/csv.hpp"
#include "covct/error.hpp"
#include "covct/preprocess.hpp"
#include "covct/scores.hpp"
#include "covct/subprocess.hpp"

namespace covct {

class ScorerBackend {
public:
    virtual ~ScorerBackend() = default;
    virtual std::string name() const = 0;
    /// One probability per slice in `batch`, index aligned.
    virtual std::vector<double> predict(const TensorBatch& batch) = 0;
};

/// Runs the backend and checks the output contract: same count as the
/// input, every probability in [0, 1].
inline std::vector<SliceScore> score_slices(const TensorBatch& batch, ScorerBackend& backend) {
    const auto probs = backend.predict(batch);
    if (probs.size() != batch.slices.size())
        throw Error(ErrorKind::CountMismatch, backend.name() + " returned " + std::to_string(probs.size()) +
                                                  " scores for " + std::to_string(batch.slices.size()) +
                                                  " slices of " + batch.patient_id);
    std::vector<SliceScore> out;
    out.reserve(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
            throw Error(ErrorKind::OutOfRange, backend.name() + " produced " + format_double(probs[i]) +
                                                   " for " + batch.patient_id + " slice " + std::to_string(i));
        out.push_back({batch.patient_id, i, probs[i]});
    }
    return out;
}

// ---------------------------------------------------------------------------
// File backend

class FileScorer final : public ScorerBackend {
public:
    explicit FileScorer(ScoreSet scores) : scores_(std::move(scores)) {}
    explicit FileScorer(const std::filesystem::path& path) : scores_(load_scores_file(path)) {}

    std::string name() const override { return "file"; }

    std::vector<double> predict(const TensorBatch& batch) override {
        auto rows = scores_.for_patient(batch.patient_id);
        if (rows.size() != batch.slices.size())
            throw Error(ErrorKind::CountMismatch, "scores file has " + std::to_string(rows.size()) + " rows for " +
                                                      batch.patient_id + ", expected " +
                                                      std::to_string(batch.slices.size()));
        std::vector<double> probs(rows.size());
        for (const auto& r : rows) {
            if (r.slice_index >= probs.size())
                throw Error(ErrorKind::CountMismatch, "slice_index " + std::to_string(r.slice_index) + " for " +
                                                          batch.patient_id + " exceeds kept slice count " +
                                                          std::to_string(probs.size()));
            probs[r.slice_index] = r.prob_noncovid;
        }
        return probs; // keys are unique and in range, so every slot was filled
    }

private:
    ScoreSet scores_;
};

// ---------------------------------------------------------------------------
// Baseline model

inline constexpr std::size_t kBaselineGrid = 16;
inline constexpr std::size_t kBaselineFeatures = kBaselineGrid * kBaselineGrid;

/// Block-mean of channel 0 over a 16x16 grid (14x14 pixel blocks).
inline std::vector<double> baseline_features(const ModelInputTensor& tensor) {
    constexpr std::size_t block = ModelInputTensor::kHeight / kBaselineGrid;
    std::vector<double> f(kBaselineFeatures, 0.0);
    for (std::size_t gy = 0; gy < kBaselineGrid; ++gy)
        for (std::size_t gx = 0; gx < kBaselineGrid; ++gx) {
            double sum = 0.0;
            for (std::size_t y = gy * block; y < (gy + 1) * block; ++y)
                for (std::size_t x = gx * block; x < (gx + 1) * block; ++x) sum += tensor.at(y, x, 0);
            f[gy * kBaselineGrid + gx] = sum / static_cast<double>(block * block);
        }
    return f;
}

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Logistic regression on standardized grid features. Predicts the
/// non-COVID probability. A default-constructed model has zero weights and
/// predicts exactly 0.5.
struct BaselineModel {
    std::vector<double> weights = std::vector<double>(kBaselineFeatures, 0.0);
    double bias = 0.0;
    std::vector<double> feature_mean = std::vector<double>(kBaselineFeatures, 0.0);
    std::vector<double> feature_scale = std::vector<double>(kBaselineFeatures, 1.0);
    std::vector<double> loss_history; // mean BCE at the start of each epoch

    double logit(const std::vector<double>& features) const {
        double z = bias;
        for (std::size_t i = 0; i < weights.size(); ++i)
            z += weights[i] * ((features[i] - feature_mean[i]) / feature_scale[i]);
        return z;
    }

    double predict_features(const std::vector<double>& features) const { return sigmoid(logit(features)); }
    double predict(const ModelInputTensor& tensor) const { return predict_features(baseline_features(tensor)); }

    nlohmann::json to_json() const {
        return {{"kind", "baseline-logistic"},
                {"grid", kBaselineGrid},
                {"weights", weights},
                {"bias", bias},
                {"feature_mean", feature_mean},
                {"feature_scale", feature_scale},
                {"loss_history", loss_history}};
    }

    static BaselineModel from_json(const nlohmann::json& j) {
        if (j.value("kind", "") != "baseline-logistic" || j.value("grid", 0u) != kBaselineGrid)
            throw Error(ErrorKind::Parse, "not a baseline model file");
        BaselineModel m;
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
        m.feature_scale = j.at("feature_scale").get<std::vector<double>>();
        m.loss_history = j.value("loss_history", std::vector<double>{});
        if (m.weights.size() != kBaselineFeatures || m.feature_mean.size() != kBaselineFeatures ||
            m.feature_scale.size() != kBaselineFeatures)
            throw Error(ErrorKind::Parse, "baseline model vectors must have 256 entries");
        return m;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::trunc);
        out << to_json().dump(2) << '\n';
        if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    }

    static BaselineModel load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::Io, "cannot open model " + path.string());
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
        }
    }
};

struct TrainOptions {
    std::size_t epochs = 200;
    double learning_rate = 0.001;
    double momentum = 0.9;
};

/// One training example: grid features plus target (true = non-COVID).
struct TrainingExample {
    std::vector<double> features;
    bool noncovid = false;
};

inline double mean_bce(const BaselineModel& model, const std::vector<TrainingExample>& data) {
    double loss = 0.0;
    for (const auto& ex : data) {
        const double z = model.logit(ex.features);
        // log(1 + exp(-z)) for y = 1, log(1 + exp(z)) for y = 0, overflow safe.
        const double s = ex.noncovid ? -z : z;
        loss += s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
    }
    return loss / static_cast<double>(data.size());
}

/// Full-batch gradient descent with momentum on mean binary cross entropy.
/// Zero initialization and fixed summation order make the result
/// bit-reproducible for identical inputs.
inline BaselineModel train_baseline(const std::vector<TrainingExample>& data, const TrainOptions& options = {}) {
    if (data.empty()) throw Error(ErrorKind::EmptyInput, "no training examples");
    const auto positives = std::count_if(data.begin(), data.end(), [](const auto& e) { return e.noncovid; });
    if (positives == 0 || static_cast<std::size_t>(positives) == data.size())
        throw Error(ErrorKind::SingleClass, "training needs at least one example of each class");
    if (options.epochs < 1 || !(options.learning_rate > 0))
        throw Error(ErrorKind::Validation, "epochs must be >= 1 and learning rate > 0");
    for (const auto& ex : data)
        if (ex.features.size() != kBaselineFeatures)
            throw Error(ErrorKind::Validation, "training example has wrong feature count");

    BaselineModel model;
    const double n = static_cast<double>(data.size());
    for (std::size_t i = 0; i < kBaselineFeatures; ++i) {
        double mean = 0.0;
        for (const auto& ex : data) mean += ex.features[i];
        mean /= n;
        double var = 0.0;
        for (const auto& ex : data) var += (ex.features[i] - mean) * (ex.features[i] - mean);
        const double sd = std::sqrt(var / n);
        model.feature_mean[i] = mean;
        model.feature_scale[i] = sd > 1e-12 ? sd : 1.0;
    }

    std::vector<std::vector<double>> z(data.size(), std::vector<double>(kBaselineFeatures));
    for (std::size_t k = 0; k < data.size(); ++k)
        for (std::size_t i = 0; i < kBaselineFeatures; ++i)
            z[k][i] = (data[k].features[i] - model.feature_mean[i]) / model.feature_scale[i];

    std::vector<double> velocity(kBaselineFeatures, 0.0);
    double velocity_bias = 0.0;
    std::vector<double> grad(kBaselineFeatures);
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_bias = 0.0;
        double loss = 0.0;
        for (std::size_t k = 0; k < data.size(); ++k) {
            double logit = model.bias;
            for (std::size_t i = 0; i < kBaselineFeatures; ++i) logit += model.weights[i] * z[k][i];
            const double s = data[k].noncovid ? -logit : logit;
            loss += s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
            const double residual = sigmoid(logit) - (data[k].noncovid ? 1.0 : 0.0);
            for (std::size_t i = 0; i < kBaselineFeatures; ++i) grad[i] += residual * z[k][i];
            grad_bias += residual;
        }
        model.loss_history.push_back(loss / n);
        for (std::size_t i = 0; i < kBaselineFeatures; ++i) {
            velocity[i] = options.momentum * velocity[i] - options.learning_rate * (grad[i] / n);
            model.weights[i] += velocity[i];
        }
        velocity_bias = options.momentum * velocity_bias - options.learning_rate * (grad_bias / n);
        model.bias += velocity_bias;
    }
    if (!std::isfinite(mean_bce(model, data))) throw Error(ErrorKind::Validation, "training diverged");
    return model;
}

/// Convenience overload: every slice of a batch inherits the patient label.
inline void append_examples(std::vector<TrainingExample>& out, const TensorBatch& batch, PatientLabel label) {
    for (const auto& t : batch.slices) out.push_back({baseline_features(t), label == PatientLabel::NonCovid});
}

class BaselineScorer final : public ScorerBackend {
public:
    explicit BaselineScorer(BaselineModel model) : model_(std::move(model)) {}

    std::string name() const override { return "baseline"; }

    std::vector<double> predict(const TensorBatch& batch) override {
        std::vector<double> out;
        out.reserve(batch.slices.size());
        for (const auto& t : batch.slices) out.push_back(model_.predict(t));
        return out;
    }

    const BaselineModel& model() const noexcept { return model_; }

private:
    BaselineModel model_;
};

// ---------------------------------------------------------------------------
// Subprocess backend

inline constexpr std::chrono::seconds kDefaultScorerTimeout{600};

/// Parses a scorer's stdout for one patient. Any line that is not a valid
/// scores row is reported verbatim.
inline std::vector<double> parse_scorer_output(std::string_view text, const std::string& patient_id,
                                               std::size_t expected) {
    std::vector<double> probs(expected, 0.0);
    std::vector<bool> filled(expected, false);
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t rows = 0;
    auto bad = [&](std::string_view line, const std::string& why) {
        return Error(ErrorKind::MalformedOutput,
                     "scorer output line " + std::to_string(line_no) + " (" + why + "): '" + std::string(line) + "'");
    };
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (!have_header) {
            if (line != kScoresHeader) throw bad(line, "expected header");
            have_header = true;
            continue;
        }
        std::vector<std::string> f;
        try {
            f = csv::split_line(line, "scorer output");
        } catch (const Error&) {
            throw bad(line, "unparseable row");
        }
        std::size_t index = 0;
        double p = 0.0;
        if (f.size() != 3 || !parse_index(f[1], index) || !parse_double(f[2], p)) throw bad(line, "unparseable row");
        if (f[0] != patient_id) throw bad(line, "unexpected patient_id");
        if (!(p >= 0.0 && p <= 1.0)) throw bad(line, "probability outside [0,1]");
        if (index >= expected) throw bad(line, "slice_index out of range");
        if (filled[index]) throw bad(line, "duplicate slice_index");
        filled[index] = true;
        probs[index] = p;
        ++rows;
    }
    if (!have_header) throw Error(ErrorKind::MalformedOutput, "scorer produced no output");
    if (rows != expected)
        throw Error(ErrorKind::CountMismatch, "scorer returned " + std::to_string(rows) + " rows for " +
                                                  std::to_string(expected) + " slices of " + patient_id);
    return probs;
}

class SubprocessScorer final : public ScorerBackend {
public:
    explicit SubprocessScorer(std::string command, std::chrono::milliseconds timeout = kDefaultScorerTimeout)
        : command_(std::move(command)), timeout_(timeout) {}

    std::string name() const override { return "subprocess"; }

    std::vector<double> predict(const TensorBatch& batch) override {
        const auto payload = archive::encode(batch);
        const auto result = process::run(command_, payload, timeout_);
        if (result.signaled || result.exit_code != 0) {
            std::string tail = result.err.size() > 2000 ? result.err.substr(result.err.size() - 2000) : result.err;
            throw Error(ErrorKind::Backend,
                        "scorer command " +
                            (result.signaled ? "killed by signal " + std::to_string(result.signal)
                                             : "exited with status " + std::to_string(result.exit_code)) +
                            (tail.empty() ? std::string() : ": " + tail));
        }
        return parse_scorer_output(result.out, batch.patient_id, batch.slices.size());
    }

private:
    std::string command_;
    std::chrono::milliseconds timeout_;
};

inline std::vector<SliceScore> score_via_subprocess(const TensorBatch& batch, const std::string& command,
                                                    std::chrono::milliseconds timeout = kDefaultScorerTimeout) {
    SubprocessScorer scorer(command, timeout);
    return score_slices(batch, scorer);
}

} // namespace covct
