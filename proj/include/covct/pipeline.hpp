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

// End-to-end stages. Each stage reads and writes files under the output
// directory so it can be rerun on its own:
//
//   archives/<patient>.ctp   preprocess
//   model.json               score (baseline backend only)
//   scores.csv               score
//   decisions.csv            aggregate
//   report.json              evaluate
//   sweep.json               sweep
//
// Stages run one after another; inside a stage, patients are spread over a
// worker pool. Output content never depends on the number of workers.

#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "covct/aggregate.hpp"
#include "covct/archive.hpp"
#include "covct/config.hpp"
#include "covct/dataset.hpp"
#include "covct/error.hpp"
#include "covct/metrics.hpp"
#include "covct/parallel.hpp"
#include "covct/preprocess.hpp"
#include "covct/scorer.hpp"
#include "covct/scores.hpp"

namespace covct {

/// Error carrying the stage that failed.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.kind(), "[" + stage + "] " + cause.message()), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// One structured line per event, to stderr unless redirected.
class Logger {
public:
    explicit Logger(std::ostream* sink = &std::cerr) : sink_(sink) {}

    void event(const std::string& stage, const std::string& patient, const std::string& fields) {
        if (!sink_) return;
        std::lock_guard lock(mu_);
        *sink_ << "stage=" << stage << " patient=" << patient << (fields.empty() ? "" : " ") << fields << '\n';
    }

    void progress(const std::string& stage, std::size_t done, std::size_t total) {
        if (!sink_) return;
        std::lock_guard lock(mu_);
        *sink_ << "[" << stage << "] " << done << "/" << total << '\n';
    }

private:
    std::ostream* sink_;
    std::mutex mu_;
};

/// Write to a sibling temp file, then rename over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

/// File name for a patient's archive. Ids are kept when they are plain
/// [A-Za-z0-9._-]; anything else is replaced by '_'.
inline std::string archive_name(const std::string& patient_id) {
    std::string name = patient_id;
    for (auto& ch : name)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' || ch == '-')) ch = '_';
    if (name.empty() || name == "." || name == "..") name = "_" + name;
    return name + ".ctp";
}

struct PipelinePaths {
    std::filesystem::path out;
    std::filesystem::path archives() const { return out / "archives"; }
    std::filesystem::path archive(const std::string& id) const { return archives() / archive_name(id); }
    std::filesystem::path model() const { return out / "model.json"; }
    std::filesystem::path scores() const { return out / "scores.csv"; }
    std::filesystem::path decisions() const { return out / "decisions.csv"; }
    std::filesystem::path report() const { return out / "report.json"; }
    std::filesystem::path sweep() const { return out / "sweep.json"; }
};

inline TruthMap truth_from_manifest(const Manifest& manifest) {
    TruthMap truth;
    for (const auto& e : manifest.entries) truth[e.patient_id] = e.label;
    return truth;
}

namespace detail {
inline void check_archive_names(const Manifest& manifest) {
    std::map<std::string, std::string> seen;
    for (const auto& e : manifest.entries) {
        const auto name = archive_name(e.patient_id);
        if (auto [it, inserted] = seen.emplace(name, e.patient_id); !inserted)
            throw Error(ErrorKind::DuplicateId,
                        "patients '" + it->second + "' and '" + e.patient_id + "' map to the same archive name");
    }
}
} // namespace detail

/// Load, select, crop, resize and archive every manifest patient. Returns
/// the kept slice count per patient in manifest order.
inline std::vector<std::size_t> stage_preprocess(const PipelineConfig& cfg, const Manifest& manifest, Logger& log) {
    const PipelinePaths paths{cfg.out};
    detail::check_archive_names(manifest);
    std::filesystem::create_directories(paths.archives());
    std::atomic<std::size_t> done{0};
    const auto total = manifest.entries.size();
    return parallel_map(total, cfg.jobs, [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        const CtVolume volume = load_volume(entry);
        TensorBatch batch{entry.patient_id, preprocess_volume(volume, cfg.selection, cfg.crop)};
        auto bytes = archive::encode(batch);
        write_file_atomic(paths.archive(entry.patient_id), std::string(bytes.begin(), bytes.end()));
        log.event("preprocess", entry.patient_id,
                  "slices=" + std::to_string(volume.slices.size()) + " kept=" + std::to_string(batch.slices.size()));
        log.progress("preprocess", ++done, total);
        return batch.slices.size();
    });
}

/// Grid features for training. With `reuse_archives`, patients already
/// preprocessed into the output directory are read back instead of being
/// decoded again.
inline std::vector<TrainingExample> collect_training_examples(const PipelineConfig& cfg, const Manifest& train,
                                                              bool reuse_archives, Logger& log) {
    const PipelinePaths paths{cfg.out};
    auto per_patient = parallel_map(train.entries.size(), cfg.jobs, [&](std::size_t i) {
        const auto& entry = train.entries[i];
        const auto archive_path = paths.archive(entry.patient_id);
        TensorBatch batch;
        bool from_archive = false;
        if (reuse_archives && std::filesystem::is_regular_file(archive_path)) {
            batch = archive::load(archive_path);
            from_archive = batch.patient_id == entry.patient_id;
        }
        if (!from_archive)
            batch = TensorBatch{entry.patient_id, preprocess_volume(load_volume(entry), cfg.selection, cfg.crop)};
        std::vector<TrainingExample> examples;
        append_examples(examples, batch, entry.label);
        log.event("train", entry.patient_id, "examples=" + std::to_string(examples.size()));
        return examples;
    });
    std::vector<TrainingExample> all;
    for (auto& v : per_patient) all.insert(all.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
    return all;
}

/// Builds the configured backend. For the baseline this loads `cfg.model`
/// or trains a fresh model and saves it to model.json.
inline std::unique_ptr<ScorerBackend> make_backend(const PipelineConfig& cfg, const Manifest& manifest, Logger& log) {
    switch (cfg.backend) {
    case BackendKind::File: return std::make_unique<FileScorer>(cfg.scores_file);
    case BackendKind::Subprocess: return std::make_unique<SubprocessScorer>(cfg.scorer_command, cfg.scorer_timeout);
    case BackendKind::Baseline: break;
    }
    if (!cfg.model.empty()) return std::make_unique<BaselineScorer>(BaselineModel::load(cfg.model));
    const bool same_set = cfg.train_manifest.empty();
    const Manifest train = same_set ? manifest : load_manifest(cfg.train_manifest, cfg.root);
    const auto examples = collect_training_examples(cfg, train, same_set, log);
    BaselineModel model = train_baseline(examples, cfg.training);
    log.event("train", "*", "examples=" + std::to_string(examples.size()) + " epochs=" +
                                std::to_string(cfg.training.epochs) + " final_loss=" +
                                format_double(model.loss_history.back()));
    write_file_atomic(PipelinePaths{cfg.out}.model(), model.to_json().dump(2) + "\n");
    return std::make_unique<BaselineScorer>(std::move(model));
}

/// Scores every archived patient; writes scores.csv in manifest order.
inline ScoreSet stage_score(const PipelineConfig& cfg, const Manifest& manifest, Logger& log) {
    const PipelinePaths paths{cfg.out};
    auto backend = make_backend(cfg, manifest, log);
    std::atomic<std::size_t> done{0};
    const auto total = manifest.entries.size();
    // Backends are stateless per call; the subprocess backend spawns one
    // child per patient, so concurrent calls never share a process.
    auto per_patient = parallel_map(total, cfg.jobs, [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        const TensorBatch batch = archive::load(paths.archive(entry.patient_id));
        if (batch.patient_id != entry.patient_id)
            throw Error(ErrorKind::IdMismatch, "archive for '" + entry.patient_id + "' holds '" + batch.patient_id + "'");
        auto scores = score_slices(batch, *backend);
        log.event("score", entry.patient_id, "backend=" + backend->name() + " slices=" + std::to_string(scores.size()));
        log.progress("score", ++done, total);
        return scores;
    });
    ScoreSet set;
    std::vector<SliceScore> flat;
    for (auto& v : per_patient)
        for (auto& s : v) {
            flat.push_back(s);
            set.add(std::move(s));
        }
    write_file_atomic(paths.scores(), scores_to_csv(flat));
    return set;
}

inline std::vector<PatientDecision> stage_aggregate(const PipelineConfig& cfg, const ScoreSet& scores,
                                                    const std::filesystem::path& out_file, Logger& log) {
    const auto decisions = decide_all(scores, Threshold(cfg.threshold));
    for (const auto& d : decisions)
        log.event("aggregate", d.patient_id,
                  "covid_votes=" + std::to_string(d.covid_votes) + " noncovid_votes=" +
                      std::to_string(d.noncovid_votes) + " verdict=" + std::string(to_string(d.verdict)));
    write_file_atomic(out_file, decisions_to_csv(decisions));
    return decisions;
}

struct EvaluationOutput {
    EvalReport patient;
    EvalReport slice;
};

inline nlohmann::json to_json(const EvaluationOutput& e) {
    return {{"patient", to_json(e.patient)}, {"slice", to_json(e.slice)}};
}

inline EvaluationOutput stage_evaluate(const PipelineConfig& cfg, const ScoreSet& scores,
                                       const std::vector<PatientDecision>& decisions, const TruthMap& truth,
                                       const std::filesystem::path& out_file) {
    EvalOptions opts;
    opts.split = cfg.split;
    opts.z = cfg.z;
    opts.threshold = cfg.threshold;
    EvaluationOutput e{evaluate_decisions(decisions, truth, opts), evaluate_slices(scores, truth, Threshold(cfg.threshold), opts)};
    write_file_atomic(out_file, to_json(e).dump(2) + "\n");
    return e;
}

inline std::vector<SweepRow> stage_sweep(const PipelineConfig& cfg, const ScoreSet& scores, const TruthMap& truth,
                                         const std::filesystem::path& out_file) {
    EvalOptions opts;
    opts.split = cfg.split;
    opts.z = cfg.z;
    auto rows = sweep_thresholds(scores, truth, cfg.thresholds, opts);
    write_file_atomic(out_file, sweep_to_json(rows).dump(2) + "\n");
    return rows;
}

struct RunResult {
    EvaluationOutput evaluation;
    std::vector<SweepRow> sweep;
};

namespace detail {
template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e);
    } catch (const std::exception& e) {
        throw StageError(stage, Error(ErrorKind::Io, e.what()));
    }
}
} // namespace detail

/// The whole pipeline. Any failure surfaces as a StageError.
inline RunResult run_pipeline(const PipelineConfig& cfg, Logger& log) {
    detail::in_stage("config", [&] {
        cfg.validate();
        return 0;
    });
    const PipelinePaths paths{cfg.out};
    const Manifest manifest = detail::in_stage("dataset", [&] { return load_manifest(cfg.manifest, cfg.root); });
    const TruthMap truth = truth_from_manifest(manifest);
    detail::in_stage("preprocess", [&] { return stage_preprocess(cfg, manifest, log); });
    const ScoreSet scores = detail::in_stage("score", [&] { return stage_score(cfg, manifest, log); });
    const auto decisions =
        detail::in_stage("aggregate", [&] { return stage_aggregate(cfg, scores, paths.decisions(), log); });
    RunResult result;
    result.evaluation =
        detail::in_stage("evaluate", [&] { return stage_evaluate(cfg, scores, decisions, truth, paths.report()); });
    result.sweep = detail::in_stage("sweep", [&] { return stage_sweep(cfg, scores, truth, paths.sweep()); });
    return result;
}

} // namespace covct
