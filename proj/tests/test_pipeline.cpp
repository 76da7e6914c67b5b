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
#include <gtest/gtest.h>

#include <sstream>

#include "covct/pipeline.hpp"
#include "covct/synth.hpp"
#include "oracles.hpp"

using namespace covct;
namespace fs = std::filesystem;

namespace {

const std::string kCli = oracle::shell_quote(COVCT_CLI_PATH);
const std::string kRef = COVCT_REF_SCORER_PATH;

std::string q(const fs::path& p) { return oracle::shell_quote(p.string()); }

// Small synthetic dataset shared by the tests below.
class PipelineTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new oracle::TempDir("covct-pipeline");
        synth::generate_synthetic_dataset(data(), synth::SynthOptions{6, 10, 7, 1});
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static fs::path data() { return dir_->path() / "data"; }
    static fs::path manifest() { return data() / "manifest.csv"; }
    static fs::path scratch(const std::string& name) { return dir_->path() / name; }

    static oracle::TempDir* dir_;
};
oracle::TempDir* PipelineTest::dir_ = nullptr;

std::vector<std::string> artifact_names() { return {"scores.csv", "decisions.csv", "report.json", "sweep.json", "model.json"}; }

void expect_same_artifacts(const fs::path& a, const fs::path& b) {
    for (const auto& name : artifact_names())
        EXPECT_EQ(oracle::read_bytes(a / name), oracle::read_bytes(b / name)) << name;
    for (const auto& item : fs::directory_iterator(a / "archives"))
        EXPECT_EQ(oracle::read_bytes(item.path()), oracle::read_bytes(b / "archives" / item.path().filename()))
            << item.path();
}

} // namespace

TEST(Synth, CountsAndBalance) {
    oracle::TempDir dir;
    const auto m = synth::generate_synthetic_dataset(dir.path(), synth::SynthOptions{10, 50, 7, 1});
    EXPECT_EQ(m.entries.size(), 10u);
    EXPECT_EQ(m.counts, (LabelCounts{5, 5}));
    std::size_t dirs = 0, images = 0;
    for (const auto& item : fs::directory_iterator(dir.path())) {
        if (!item.is_directory()) continue;
        ++dirs;
        for (const auto& f : fs::directory_iterator(item.path())) images += f.path().extension() == ".png";
    }
    EXPECT_EQ(dirs, 10u);
    EXPECT_EQ(images, 500u);
}

TEST(Synth, SameSeedSameBytes) {
    oracle::TempDir a, b, c;
    synth::generate_synthetic_dataset(a.path(), synth::SynthOptions{2, 3, 7, 1});
    synth::generate_synthetic_dataset(b.path(), synth::SynthOptions{2, 3, 7, 2});
    synth::generate_synthetic_dataset(c.path(), synth::SynthOptions{2, 3, 8, 1});
    for (const char* rel : {"P001/slice_0.png", "P002/slice_2.png", "manifest.csv"})
        EXPECT_EQ(oracle::read_bytes(a / rel), oracle::read_bytes(b / rel)) << rel;
    EXPECT_NE(oracle::read_bytes(a / "P001/slice_1.png"), oracle::read_bytes(c / "P001/slice_1.png"));
}

TEST(Synth, SignalInsideDefaultCrop) {
    const auto w = resolve_window(CropSpec{}, synth::kSide, synth::kSide);
    EXPECT_EQ(w.top, 142u);
    EXPECT_EQ(w.left, 106u);
    EXPECT_GE(synth::kSignalPatch.top, w.top);
    EXPECT_GE(synth::kSignalPatch.left, w.left);
    EXPECT_LE(synth::kSignalPatch.bottom, w.top + w.crop_height);
    EXPECT_LE(synth::kSignalPatch.right, w.left + w.crop_width);
    EXPECT_LE(w.top + w.crop_height, 369u);
    EXPECT_LE(w.left + w.crop_width, 406u);
}

TEST(Synth, InvalidCounts) {
    oracle::TempDir dir;
    EXPECT_THROW(synth::generate_synthetic_dataset(dir.path(), synth::SynthOptions{1, 3, 7, 1}), Error);
    EXPECT_THROW(synth::generate_synthetic_dataset(dir.path(), synth::SynthOptions{2, 0, 7, 1}), Error);
}

TEST_F(PipelineTest, LibraryRunSeparatesPatients) {
    PipelineConfig cfg;
    cfg.manifest = manifest();
    cfg.out = scratch("lib");
    Logger quiet(nullptr);
    const auto result = run_pipeline(cfg, quiet);
    EXPECT_EQ(result.evaluation.patient.accuracy, 1.0);
    EXPECT_EQ(result.evaluation.patient.macro_f1, 1.0);
    EXPECT_EQ(result.evaluation.patient.n, 6u);
    EXPECT_EQ(result.evaluation.slice.n, 36u);
    ASSERT_EQ(result.sweep.size(), 4u);
    for (const auto& name : artifact_names()) EXPECT_TRUE(fs::exists(cfg.out / name)) << name;
    EXPECT_EQ(load_scores_file(cfg.out / "scores.csv").size(), 36u);
    EXPECT_EQ(archive::load(cfg.out / "archives" / "P003.ctp").slices.size(), 6u);
}

TEST_F(PipelineTest, LoggerWritesOneLinePerPatientPerStage) {
    PipelineConfig cfg;
    cfg.manifest = manifest();
    cfg.out = scratch("logged");
    std::ostringstream sink;
    Logger log(&sink);
    run_pipeline(cfg, log);
    const auto text = sink.str();
    EXPECT_NE(text.find("stage=preprocess patient=P001"), std::string::npos) << text;
    EXPECT_NE(text.find("stage=score patient=P006"), std::string::npos) << text;
    EXPECT_NE(text.find("[preprocess] 6/6"), std::string::npos) << text;
}

TEST_F(PipelineTest, StageTaggedErrors) {
    PipelineConfig cfg;
    cfg.manifest = manifest();
    cfg.out = scratch("bad");
    cfg.selection.keep_fraction = 1.5;
    Logger quiet(nullptr);
    try {
        run_pipeline(cfg, quiet);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "config");
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
    }
    EXPECT_FALSE(fs::exists(cfg.out));

    cfg.selection.keep_fraction = 0.6;
    cfg.backend = BackendKind::Subprocess;
    cfg.scorer_command = oracle::shell_quote(kRef) + " garbage";
    try {
        run_pipeline(cfg, quiet);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "score");
        EXPECT_EQ(e.kind(), ErrorKind::MalformedOutput);
    }
}

TEST_F(PipelineTest, CliRunIsReproducibleAcrossJobs) {
    const auto a = scratch("cli-a"), b = scratch("cli-b");
    auto [rc1, out1] = oracle::shell(kCli + " run --quiet --manifest " + q(manifest()) + " --out " + q(a) + " --jobs 1");
    ASSERT_EQ(rc1, 0) << out1;
    auto [rc2, out2] = oracle::shell(kCli + " --jobs 3 --quiet run --manifest " + q(manifest()) + " --out " + q(b));
    ASSERT_EQ(rc2, 0) << out2;
    EXPECT_EQ(out1, out2);
    expect_same_artifacts(a, b);
}

TEST_F(PipelineTest, CliStagesMatchRun) {
    const auto full = scratch("stages-full"), step = scratch("stages-step");
    ASSERT_EQ(oracle::shell(kCli + " run --quiet --manifest " + q(manifest()) + " --out " + q(full)).first, 0);
    const std::string common = " --quiet --manifest " + q(manifest()) + " --out " + q(step);
    for (const char* sub : {"preprocess", "score", "aggregate", "evaluate", "sweep"}) {
        auto [rc, out] = oracle::shell(kCli + " " + sub + common);
        ASSERT_EQ(rc, 0) << sub << "\n" << out;
    }
    expect_same_artifacts(full, step);
}

TEST_F(PipelineTest, CliFileBackendReusesScores) {
    const auto first = scratch("file-src"), second = scratch("file-dst");
    ASSERT_EQ(oracle::shell(kCli + " run --quiet --manifest " + q(manifest()) + " --out " + q(first)).first, 0);
    auto [rc, out] = oracle::shell(kCli + " run --quiet --backend file --scores-file " + q(first / "scores.csv") +
                                   " --manifest " + q(manifest()) + " --out " + q(second));
    ASSERT_EQ(rc, 0) << out;
    EXPECT_EQ(oracle::read_bytes(first / "scores.csv"), oracle::read_bytes(second / "scores.csv"));
    EXPECT_EQ(oracle::read_bytes(first / "decisions.csv"), oracle::read_bytes(second / "decisions.csv"));
}

TEST_F(PipelineTest, CliSubprocessBackend) {
    const auto out_dir = scratch("subprocess");
    auto [rc, out] = oracle::shell(kCli + " run --quiet --backend subprocess --command " +
                                   q(oracle::shell_quote(kRef) + " constant 0.25") + " --manifest " + q(manifest()) +
                                   " --out " + q(out_dir));
    ASSERT_EQ(rc, 0) << out;
    const auto scores = load_scores_file(out_dir / "scores.csv");
    EXPECT_EQ(scores.size(), 36u);
    for (const auto& s : scores.rows()) EXPECT_EQ(s.prob_noncovid, 0.25);
}

TEST_F(PipelineTest, CliValidationErrors) {
    const auto out_dir = scratch("invalid");
    auto [rc, out] = oracle::shell(kCli + " run --keep-fraction 1.5 --manifest " + q(manifest()) + " --out " + q(out_dir));
    EXPECT_EQ(rc, 2);
    EXPECT_NE(out.find("keep_fraction"), std::string::npos) << out;
    EXPECT_NE(out.find("[config]"), std::string::npos) << out;
    EXPECT_FALSE(fs::exists(out_dir));

    auto [rc2, out2] = oracle::shell(kCli + " run --out " + q(out_dir));
    EXPECT_EQ(rc2, 2);
    EXPECT_NE(out2.find("manifest"), std::string::npos) << out2;

    auto [rc3, out3] = oracle::shell(kCli + " run --manifest " + q(scratch("none.csv")) + " --out " + q(out_dir));
    EXPECT_EQ(rc3, 2);
    EXPECT_NE(out3.find("manifest"), std::string::npos) << out3;
}

TEST_F(PipelineTest, CliFlagsOverrideConfigFile) {
    const auto out_dir = scratch("override");
    oracle::write_text(scratch("cfg.toml"), "manifest = \"" + manifest().string() + "\"\nthreshold = 0.6\nout = \"" +
                                                 scratch("ignored").string() + "\"\nthresholds = 0.6\n");
    auto [rc, out] = oracle::shell(kCli + " --config " + q(scratch("cfg.toml")) + " --out " + q(out_dir) +
                                   " run --quiet --threshold 0.8");
    ASSERT_EQ(rc, 0) << out;
    EXPECT_TRUE(fs::exists(out_dir / "report.json"));
    EXPECT_FALSE(fs::exists(scratch("ignored")));
    const auto report = nlohmann::json::parse(oracle::read_bytes(out_dir / "report.json"));
    EXPECT_EQ(report["patient"]["threshold"], 0.8);
    const auto sweep = nlohmann::json::parse(oracle::read_bytes(out_dir / "sweep.json"));
    ASSERT_EQ(sweep.size(), 1u);
    EXPECT_EQ(sweep[0]["threshold"], 0.6);
}

TEST_F(PipelineTest, CliStageErrorForCorruptSlice) {
    oracle::TempDir dir;
    fs::copy(data(), dir.path() / "data", fs::copy_options::recursive);
    oracle::write_text(dir.path() / "data/P002/slice_4.png", "truncated");
    auto [rc, out] = oracle::shell(kCli + " run --quiet --manifest " + q(dir.path() / "data/manifest.csv") + " --out " +
                                   q(dir.path() / "out"));
    EXPECT_EQ(rc, 1);
    EXPECT_NE(out.find("[preprocess]"), std::string::npos) << out;
    EXPECT_NE(out.find("slice_4.png"), std::string::npos) << out;
}

TEST_F(PipelineTest, CliAggregateToNamedFile) {
    const auto out_dir = scratch("agg");
    ASSERT_EQ(oracle::shell(kCli + " run --quiet --manifest " + q(manifest()) + " --out " + q(out_dir)).first, 0);
    auto [rc, out] = oracle::shell(kCli + " aggregate --quiet --scores " + q(out_dir / "scores.csv") + " --manifest " +
                                   q(manifest()) + " --threshold 0.7 --out " + q(scratch("named.csv")));
    ASSERT_EQ(rc, 0) << out;
    EXPECT_EQ(oracle::read_bytes(scratch("named.csv")), oracle::read_bytes(out_dir / "decisions.csv"));
}
