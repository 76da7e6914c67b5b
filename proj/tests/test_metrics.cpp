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

#include <random>
#include <sstream>

#include "covct/metrics.hpp"
#include "oracles.hpp"

using namespace covct;

namespace {
ConfusionMatrix cm(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) { return {tp, fp, tn, fn}; }
} // namespace

TEST(Accuracy, Examples) {
    EXPECT_DOUBLE_EQ(accuracy(cm(5, 1, 3, 1)), 0.8);
    EXPECT_EQ(accuracy(cm(0, 0, 7, 0)), 1.0);
    EXPECT_EQ(accuracy(cm(0, 5, 0, 5)), 0.0);
}

TEST(Accuracy, EmptyMatrix) {
    try {
        accuracy(cm(0, 0, 0, 0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
    }
    EXPECT_THROW(macro_f1(cm(0, 0, 0, 0)), Error);
}

TEST(MacroF1, HandComputed) {
    const auto m = macro_f1_detail(cm(5, 1, 3, 1));
    const double expect = (5.0 / 6.0 + 3.0 / 4.0) / 2.0;
    EXPECT_NEAR(m.average_precision, expect, 1e-15);
    EXPECT_NEAR(m.average_recall, expect, 1e-15);
    EXPECT_NEAR(m.value, 0.7916666666666666, 1e-15);
    EXPECT_FALSE(m.any_undefined());
}

TEST(MacroF1, DiffersFromMeanOfPerClassF1) {
    // tp 8, fp 1, tn 1, fn 4: P = (8/9, 1/5), R = (8/12, 1/2)
    const auto c = cm(8, 1, 1, 4);
    const double p = (8.0 / 9.0 + 1.0 / 5.0) / 2.0, r = (8.0 / 12.0 + 1.0 / 2.0) / 2.0;
    EXPECT_NEAR(macro_f1(c), 2 * p * r / (p + r), 1e-15);
    auto f1 = [](double a, double b) { return 2 * a * b / (a + b); };
    const double mean_f1 = (f1(8.0 / 9.0, 8.0 / 12.0) + f1(1.0 / 5.0, 1.0 / 2.0)) / 2.0;
    EXPECT_GT(std::abs(macro_f1(c) - mean_f1), 1e-3);
}

TEST(MacroF1, PerfectIsOne) {
    for (auto c : {cm(3, 0, 9, 0), cm(1, 0, 1, 0), cm(100, 0, 1, 0)}) EXPECT_EQ(macro_f1(c), 1.0);
}

TEST(MacroF1, ZeroDenominatorsFlagged) {
    const auto m = macro_f1_detail(cm(0, 0, 0, 4));
    EXPECT_EQ(m.value, 0.0);
    EXPECT_TRUE(m.precision_covid_undefined);
    EXPECT_FALSE(m.recall_covid_undefined);
    EXPECT_TRUE(m.recall_noncovid_undefined);
    EXPECT_TRUE(m.undefined);
}

TEST(MacroF1, OracleOnRandomMatrices) {
    std::mt19937 rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        ConfusionMatrix c{rng() % 60, rng() % 60, rng() % 60, rng() % 60};
        if (trial % 10 == 0) c.fp = 0;
        if (trial % 13 == 0) c.tp = 0;
        if (c.total() == 0) c.tn = 1;
        const auto pairs = oracle::expand(c.tp, c.fp, c.tn, c.fn);
        ASSERT_NEAR(accuracy(c), oracle::accuracy(pairs), 1e-12);
        ASSERT_NEAR(macro_f1(c), oracle::macro_f1(pairs), 1e-12);
        ASSERT_NEAR(macro_f1(c), macro_f1(c.swapped()), 1e-12);
        ASSERT_NEAR(accuracy(c), accuracy(c.swapped()), 1e-12);
        ASSERT_GE(macro_f1(c), 0.0);
        ASSERT_LE(macro_f1(c), 1.0);
    }
}

TEST(CiRadius, ReportedValue) {
    EXPECT_NEAR(ci_radius(0.8848, 30235, 1.96), 0.0036, 1e-4);
    EXPECT_EQ(format_fixed(ci_radius(0.8848, 30235, 1.96)), "0.0036");
}

TEST(CiRadius, Examples) {
    EXPECT_EQ(ci_radius(0.0, 57, 3.0), 0.0);
    EXPECT_EQ(ci_radius(1.0, 57, 3.0), 0.0);
    EXPECT_NEAR(ci_radius(0.5, 100, 2.0), 0.1, 1e-15);
}

TEST(CiRadius, ScalesWithInverseRootN) {
    for (double p : {0.1, 0.5, 0.8848})
        for (std::size_t n : {1u, 7u, 1000u}) EXPECT_NEAR(ci_radius(p, n) / ci_radius(p, 4 * n), 2.0, 1e-12);
}

TEST(CiRadius, MaximalAtOneHalf) {
    const double peak = ci_radius(0.5, 50);
    for (int k = 0; k <= 100; ++k) EXPECT_LE(ci_radius(k / 100.0, 50), peak);
}

TEST(CiRadius, Errors) {
    EXPECT_THROW(ci_radius(0.5, 0), Error);
    EXPECT_THROW(ci_radius(1.5, 10), Error);
    EXPECT_THROW(ci_radius(0.5, 10, 0.0), Error);
}

TEST(Evaluate, ReportFields) {
    std::vector<std::pair<std::string, PatientLabel>> preds;
    std::map<std::string, std::optional<PatientLabel>> truth;
    auto add = [&](const std::string& id, PatientLabel p, PatientLabel a) {
        preds.emplace_back(id, p);
        truth[id] = a;
    };
    const auto C = PatientLabel::Covid, N = PatientLabel::NonCovid;
    for (int i = 0; i < 5; ++i) add("tp" + std::to_string(i), C, C);
    add("fp", C, N);
    for (int i = 0; i < 3; ++i) add("tn" + std::to_string(i), N, N);
    add("fn", N, C);
    const auto r = evaluate(preds, truth, EvalOptions{EvalLevel::Patient, "validation", 0.7, 1.96});
    EXPECT_EQ(r.confusion, cm(5, 1, 3, 1));
    EXPECT_DOUBLE_EQ(r.accuracy, 0.8);
    EXPECT_NEAR(r.macro_f1, 0.7916666666666666, 1e-15);
    EXPECT_NEAR(r.ci_radius, 1.96 * std::sqrt(r.accuracy * (1 - r.accuracy) / r.n), 1e-12);
    const auto j = to_json(r);
    for (const char* key : {"level", "threshold", "n", "accuracy", "macro_f1", "ci_radius", "z", "confusion", "split"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["confusion"]["tp"], 5);
}

TEST(Evaluate, IdMismatchAndMissingLabel) {
    std::map<std::string, std::optional<PatientLabel>> truth{{"A", PatientLabel::Covid}, {"B", std::nullopt}};
    try {
        evaluate({{"Z", PatientLabel::Covid}}, truth);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IdMismatch);
    }
    try {
        evaluate({{"B", PatientLabel::Covid}}, truth);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingLabel);
    }
}

TEST(Evaluate, PrintsInterval) {
    // 26752 / 30235 = 0.88480...
    const auto r = evaluate(cm(13376, 1742, 13376, 1741), EvalOptions{EvalLevel::Slice, "validation", 0.7, 1.96});
    EXPECT_EQ(r.n, 30235u);
    EXPECT_EQ(format_interval(r.accuracy, r.ci_radius), "0.8848 ± 0.0036");
    std::ostringstream out;
    print_report(out, r);
    EXPECT_NE(out.str().find("0.8848 ± 0.0036"), std::string::npos) << out.str();
}
