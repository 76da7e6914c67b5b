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

// covct command line: synth, preprocess, score, aggregate, evaluate, sweep, run.
//
// Settings come from defaults, then the --config file, then flags; flags win.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "covct/covct.hpp"

namespace fs = std::filesystem;
using namespace covct;

namespace {

/// Flag values captured as text and replayed onto the config with the same
/// keys the config file uses.
struct Settings {
    std::map<std::string, std::string> values;
    std::vector<std::pair<CLI::Option*, std::string>> bindings;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto* opt = app->add_option(flag, values[key], help);
        bindings.emplace_back(opt, key);
    }

    void add_flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto* opt = app->add_flag(flag, help);
        bindings.emplace_back(opt, key);
        values[key] = "true";
    }

    void apply(PipelineConfig& cfg) const {
        for (const auto& [opt, key] : bindings)
            if (opt->count() > 0) apply_setting(cfg, key, values.at(key));
    }
};

void add_dataset_options(CLI::App* app, Settings& s) {
    s.add(app, "--root", "root", "dataset root; manifest paths are relative to it");
    s.add(app, "--manifest", "manifest", "labels manifest CSV (patient_id,label,path)");
}

void add_preprocess_options(CLI::App* app, Settings& s) {
    s.add(app, "--keep-fraction", "keep_fraction", "central fraction of slices kept (default 0.6)");
    s.add(app, "--crop", "crop", "crop size HEIGHTxWIDTH (default 227x300)");
    s.add(app, "--crop-offset", "crop_offset", "crop offset TOP,LEFT (default: centered)");
    s.add_flag(app, "--strict-dims", "strict_dims", "reject slices that are not 512x512");
}

void add_score_options(CLI::App* app, Settings& s) {
    s.add(app, "--backend", "backend", "baseline | file | subprocess (default baseline)");
    s.add(app, "--scores-file", "scores_file", "precomputed scores CSV for the file backend");
    s.add(app, "--command", "scorer_command", "scorer command for the subprocess backend");
    s.add(app, "--timeout", "scorer_timeout", "subprocess timeout in seconds (default 600)");
    s.add(app, "--model", "model", "saved baseline model.json to reuse instead of training");
    s.add(app, "--train-manifest", "train_manifest", "training manifest for the baseline (default: --manifest)");
    s.add(app, "--epochs", "epochs", "baseline training epochs (default 200)");
    s.add(app, "--lr", "learning_rate", "baseline learning rate (default 0.001)");
}

void add_eval_options(CLI::App* app, Settings& s) {
    s.add(app, "--threshold", "threshold", "class probability threshold (default 0.7)");
    s.add(app, "--z", "z", "standard-normal quantile for the interval (default 1.96)");
    s.add(app, "--split", "split", "split name recorded in reports (default validation)");
}

PipelineConfig build_config(const std::string& config_path, const Settings& global, const Settings& local) {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    global.apply(cfg);
    local.apply(cfg);
    return cfg;
}

/// `--out x.csv` names the file; anything else is a directory.
fs::path output_file(const std::string& out_flag, const fs::path& default_path,
                     const std::string& extension) {
    if (!out_flag.empty() && fs::path(out_flag).extension() == extension) return out_flag;
    return default_path;
}

TruthMap truth_for(const PipelineConfig& cfg) {
    if (cfg.manifest.empty()) throw Error(ErrorKind::Validation, "manifest: is required");
    return truth_from_manifest(load_manifest(cfg.manifest, cfg.root, false));
}

int fail(const std::string& stage, const std::exception& e) {
    std::cerr << "error: [" << stage << "] " << e.what() << '\n';
    if (const auto* err = dynamic_cast<const Error*>(&e); err && err->kind() == ErrorKind::Validation) return 2;
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"covct: CT slice selection, cropping, scoring and majority-vote diagnosis"};
    app.require_subcommand(1);

    std::string config_path;
    Settings global;
    app.add_option("--config", config_path, "TOML-style key = value config file")->check(CLI::ExistingFile);
    global.add(&app, "--jobs", "jobs", "worker threads (default 1)");
    global.add(&app, "--seed", "seed", "random seed (default 7)");
    global.add(&app, "--out", "out", "output directory (default covct-out)");
    bool quiet = false;
    app.add_flag("--quiet", quiet, "suppress per-patient log lines");

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic dataset with a planted, separable signal");
    synth->fallthrough();
    std::size_t synth_patients = 20, synth_slices = 50;
    synth->add_option("--patients", synth_patients, "number of patients (>= 2)")->capture_default_str();
    synth->add_option("--slices", synth_slices, "slices per patient")->capture_default_str();
    Settings synth_s;

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "select, crop, resize; write one tensor archive per patient");
    pre->fallthrough();
    Settings pre_s;
    add_dataset_options(pre, pre_s);
    add_preprocess_options(pre, pre_s);

    // score
    auto* score = app.add_subcommand("score", "score archived slices; writes scores.csv");
    score->fallthrough();
    Settings score_s;
    add_dataset_options(score, score_s);
    add_preprocess_options(score, score_s);
    add_score_options(score, score_s);

    // aggregate
    auto* agg = app.add_subcommand("aggregate", "threshold slices and majority-vote per patient");
    agg->fallthrough();
    Settings agg_s;
    std::string agg_scores;
    agg->add_option("--scores", agg_scores, "scores CSV (default <out>/scores.csv)");
    add_dataset_options(agg, agg_s);
    agg_s.add(agg, "--threshold", "threshold", "class probability threshold (default 0.7)");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "accuracy, macro F1 and interval for decisions and/or scores");
    eval->fallthrough();
    Settings eval_s;
    std::string eval_scores, eval_decisions;
    eval->add_option("--scores", eval_scores, "scores CSV for the slice-level report");
    eval->add_option("--decisions", eval_decisions, "decisions CSV for the patient-level report");
    add_dataset_options(eval, eval_s);
    add_eval_options(eval, eval_s);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "patient-level evaluation over several thresholds");
    sweep->fallthrough();
    Settings sweep_s;
    std::string sweep_scores;
    sweep->add_option("--scores", sweep_scores, "scores CSV (default <out>/scores.csv)");
    add_dataset_options(sweep, sweep_s);
    sweep_s.add(sweep, "--thresholds", "thresholds", "comma separated thresholds (default 0.5,0.6,0.7,0.8)");
    sweep_s.add(sweep, "--z", "z", "standard-normal quantile (default 1.96)");
    sweep_s.add(sweep, "--split", "split", "split name recorded in reports");

    // run
    auto* run = app.add_subcommand("run", "full pipeline: preprocess, score, aggregate, evaluate, sweep");
    run->fallthrough();
    Settings run_s;
    add_dataset_options(run, run_s);
    add_preprocess_options(run, run_s);
    add_score_options(run, run_s);
    add_eval_options(run, run_s);
    run_s.add(run, "--thresholds", "thresholds", "sweep thresholds (default 0.5,0.6,0.7,0.8)");

    CLI11_PARSE(app, argc, argv);

    std::string stage = "config";
    try {
        auto local = [&]() -> const Settings& {
            if (*synth) return synth_s;
            if (*pre) return pre_s;
            if (*score) return score_s;
            if (*agg) return agg_s;
            if (*eval) return eval_s;
            if (*sweep) return sweep_s;
            return run_s;
        }();
        PipelineConfig cfg = build_config(config_path, global, local);
        if (cfg.jobs < 1) throw Error(ErrorKind::Validation, "jobs: must be >= 1");
        Logger log(quiet ? nullptr : &std::cerr);
        const PipelinePaths paths{cfg.out};
        const std::string out_flag = global.values.at("out");

        if (*synth) {
            stage = "synth";
            synth::SynthOptions opts{synth_patients, synth_slices, cfg.seed, cfg.jobs};
            const auto manifest = synth::generate_synthetic_dataset(cfg.out, opts);
            std::cout << "wrote " << manifest.entries.size() << " patients x " << synth_slices << " slices to "
                      << cfg.out.string() << " (covid " << manifest.counts.covid << ", non-covid "
                      << manifest.counts.non_covid << ")\n";
            return 0;
        }

        if (*run) {
            const auto result = run_pipeline(cfg, log);
            print_report(std::cout, result.evaluation.patient);
            print_report(std::cout, result.evaluation.slice);
            print_sweep(std::cout, result.sweep);
            return 0;
        }

        if (*pre) {
            stage = "dataset";
            if (cfg.manifest.empty()) throw Error(ErrorKind::Validation, "manifest: is required");
            cfg.selection.validate();
            const auto manifest = load_manifest(cfg.manifest, cfg.root);
            stage = "preprocess";
            const auto kept = stage_preprocess(cfg, manifest, log);
            std::size_t total = 0;
            for (auto k : kept) total += k;
            std::cout << "archived " << kept.size() << " patients, " << total << " kept slices to "
                      << paths.archives().string() << "\n";
            return 0;
        }

        if (*score) {
            stage = "dataset";
            if (cfg.manifest.empty()) throw Error(ErrorKind::Validation, "manifest: is required");
            const auto manifest = load_manifest(cfg.manifest, cfg.root, false);
            stage = "score";
            const auto scores = stage_score(cfg, manifest, log);
            std::cout << "wrote " << scores.size() << " slice scores to " << paths.scores().string() << "\n";
            return 0;
        }

        if (*agg) {
            stage = "aggregate";
            const fs::path scores_path = agg_scores.empty() ? paths.scores() : fs::path(agg_scores);
            const ScoreSet scores = load_scores_file(scores_path);
            if (!cfg.manifest.empty()) {
                const auto truth = truth_for(cfg);
                for (const auto& id : scores.patients())
                    if (!truth.count(id))
                        throw Error(ErrorKind::IdMismatch, "scored patient '" + id + "' is not in the manifest");
            }
            const auto out_file = output_file(out_flag, paths.decisions(), ".csv");
            const auto decisions = stage_aggregate(cfg, scores, out_file, log);
            std::cout << "wrote " << decisions.size() << " decisions to " << out_file.string() << "\n";
            return 0;
        }

        if (*eval) {
            stage = "evaluate";
            const auto truth = truth_for(cfg);
            EvalOptions opts;
            opts.split = cfg.split;
            opts.z = cfg.z;
            opts.threshold = cfg.threshold;
            nlohmann::json report = nlohmann::json::object();
            if (eval_decisions.empty() && eval_scores.empty()) {
                eval_decisions = paths.decisions().string();
                eval_scores = paths.scores().string();
            }
            if (!eval_decisions.empty()) {
                const auto r = evaluate_decisions(load_decisions(eval_decisions), truth, opts);
                print_report(std::cout, r);
                report["patient"] = to_json(r);
            }
            if (!eval_scores.empty()) {
                const auto r = evaluate_slices(load_scores_file(eval_scores), truth, Threshold(cfg.threshold), opts);
                print_report(std::cout, r);
                report["slice"] = to_json(r);
            }
            write_file_atomic(output_file(out_flag, paths.report(), ".json"), report.dump(2) + "\n");
            return 0;
        }

        if (*sweep) {
            stage = "sweep";
            const fs::path scores_path = sweep_scores.empty() ? paths.scores() : fs::path(sweep_scores);
            const auto rows = stage_sweep(cfg, load_scores_file(scores_path), truth_for(cfg),
                                          output_file(out_flag, paths.sweep(), ".json"));
            print_sweep(std::cout, rows);
            return 0;
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::Validation ? 2 : 1;
    } catch (const std::exception& e) {
        return fail(stage, e);
    }
    return 0;
}
