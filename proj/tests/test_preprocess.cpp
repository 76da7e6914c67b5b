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

#include "covct/preprocess.hpp"
#include "oracles.hpp"

using namespace covct;

namespace {

SliceImage random_slice(std::mt19937& rng, std::size_t h, std::size_t w) {
    std::vector<std::uint8_t> px(h * w);
    for (auto& p : px) p = static_cast<std::uint8_t>(rng() & 0xff);
    return SliceImage(h, w, std::move(px));
}

CtVolume numbered_volume(std::size_t n, std::size_t side = 4) {
    CtVolume v;
    v.patient_id = "P";
    for (std::size_t i = 0; i < n; ++i) v.slices.emplace_back(side, side, static_cast<std::uint8_t>(i % 256));
    return v;
}

std::vector<std::size_t> markers(const CtVolume& v) {
    std::vector<std::size_t> out;
    for (const auto& s : v.slices) out.push_back(s.at(0, 0));
    return out;
}

} // namespace

TEST(Selection, HundredKeepsSixty) {
    const auto r = central_slice_range(100, SelectionPolicy{});
    EXPECT_EQ(r, (SliceRange{20, 80}));
    EXPECT_EQ(r.size(), 60u);
}

TEST(Selection, TenKeepsSix) {
    EXPECT_EQ(central_slice_range(10, SelectionPolicy{}), (SliceRange{2, 8}));
}

TEST(Selection, ThreeKeepsAll) {
    EXPECT_EQ(central_slice_range(3, SelectionPolicy{}), (SliceRange{0, 3}));
}

TEST(Selection, SingleSlice) {
    EXPECT_EQ(central_slice_range(1, SelectionPolicy{}), (SliceRange{0, 1}));
}

TEST(Selection, LawHoldsUpToTwoThousand) {
    for (std::size_t n = 1; n <= 2000; ++n) {
        const auto v = select_central_slices(numbered_volume(n, 1), SelectionPolicy{});
        const auto expect = oracle::kept_indices(n, oracle::fifth(n));
        ASSERT_EQ(v.slices.size(), std::max<std::size_t>(1, n - 2 * oracle::fifth(n))) << n;
        ASSERT_EQ(v.slices.size(), expect.size()) << n;
        const auto got = markers(v);
        for (std::size_t i = 0; i < expect.size(); ++i) ASSERT_EQ(got[i], expect[i] % 256) << n;
        const auto r = central_slice_range(n, SelectionPolicy{});
        ASSERT_EQ(r.first, n - r.last) << n; // same number removed from each end
    }
}

TEST(Selection, SmallKeepFractionFallsBackToMiddle) {
    const SelectionPolicy tiny{0.01};
    for (std::size_t n = 1; n <= 300; ++n) {
        const auto r = central_slice_range(n, tiny);
        const std::size_t per_end = n * 99 / 200;
        const auto expect = oracle::kept_indices(n, per_end);
        ASSERT_EQ(r.size(), expect.size()) << n;
        ASSERT_EQ(r.first, expect.front()) << n;
    }
}

TEST(Selection, KeepAll) {
    EXPECT_EQ(central_slice_range(17, SelectionPolicy{1.0}), (SliceRange{0, 17}));
}

TEST(Selection, InvalidPolicy) {
    EXPECT_THROW(central_slice_range(10, SelectionPolicy{0.0}), Error);
    EXPECT_THROW(central_slice_range(10, SelectionPolicy{1.5}), Error);
    EXPECT_THROW(central_slice_range(0, SelectionPolicy{}), Error);
}

TEST(Crop, DefaultWindowOn512) {
    const auto w = resolve_window(CropSpec{}, 512, 512);
    EXPECT_EQ(w, (CropWindow{142, 106, 227, 300}));
    std::mt19937 rng(1);
    const auto out = crop_slice(random_slice(rng, 512, 512), w);
    EXPECT_EQ(out.height(), 227u);
    EXPECT_EQ(out.width(), 300u);
}

TEST(Crop, IdentityWindow) {
    std::mt19937 rng(2);
    const auto s = random_slice(rng, 31, 17);
    EXPECT_EQ(crop_slice(s, CropWindow{0, 0, 31, 17}), s);
}

TEST(Crop, OutOfBounds) {
    std::mt19937 rng(3);
    const auto s = random_slice(rng, 512, 512);
    try {
        crop_slice(s, CropWindow{0, 300, 227, 300});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::OutOfBounds);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("512x512"), std::string::npos) << msg;
        EXPECT_NE(msg.find("227x300@0,300"), std::string::npos) << msg;
    }
}

TEST(Crop, BitExactOnRandomWindows) {
    std::mt19937 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t h = 1 + rng() % 64, w = 1 + rng() % 64;
        const auto s = random_slice(rng, h, w);
        const std::size_t ch = 1 + rng() % h, cw = 1 + rng() % w;
        const std::size_t top = rng() % (h - ch + 1), left = rng() % (w - cw + 1);
        const auto out = crop_slice(s, CropWindow{top, left, ch, cw});
        for (std::size_t i = 0; i < ch; ++i)
            for (std::size_t j = 0; j < cw; ++j) ASSERT_EQ(out.at(i, j), s.at(top + i, left + j));
    }
}

TEST(Crop, NonStandardDimsCenteredAndClamped) {
    EXPECT_EQ(resolve_window(CropSpec{}, 600, 400), (CropWindow{186, 50, 227, 300}));
    EXPECT_EQ(resolve_window(CropSpec{}, 100, 120), (CropWindow{0, 0, 100, 120}));
}

TEST(Crop, StrictModeRejectsOtherDims) {
    CropSpec spec;
    spec.strict_dims = true;
    EXPECT_NO_THROW(resolve_window(spec, 512, 512));
    try {
        resolve_window(spec, 600, 400);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
    }
}

TEST(Crop, ExplicitOffsetOverridesCentering) {
    CropSpec spec;
    spec.top = 10;
    spec.left = 20;
    EXPECT_EQ(resolve_window(spec, 512, 512), (CropWindow{10, 20, 227, 300}));
}

TEST(Resize, ConstantImageIsFixedPoint) {
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{2, 2}, {227, 300}, {512, 512}, {5, 700}}) {
        const auto t = to_model_input(SliceImage(h, w, std::uint8_t{128}));
        for (float v : t.values()) ASSERT_EQ(v, static_cast<float>(128.0 / 255.0));
    }
}

TEST(Resize, IdentityAtEqualDims) {
    std::mt19937 rng(5);
    const auto s = random_slice(rng, 224, 224);
    const auto t = to_model_input(s);
    for (std::size_t r = 0; r < 224; ++r)
        for (std::size_t c = 0; c < 224; ++c)
            ASSERT_EQ(t.at(r, c, 0), static_cast<float>(s.at(r, c) / 255.0));
}

TEST(Resize, TwoByTwoMonotone) {
    const SliceImage s(2, 2, std::vector<std::uint8_t>{0, 255, 0, 255});
    const auto t = to_model_input(s);
    EXPECT_GT(t.at(100, 112, 0), 0.0f);
    EXPECT_LT(t.at(100, 112, 0), 1.0f);
    for (std::size_t r = 0; r < 224; ++r)
        for (std::size_t c = 1; c < 224; ++c) ASSERT_GE(t.at(r, c, 0), t.at(r, c - 1, 0));
}

TEST(Resize, MatchesBruteForceBilinear) {
    std::mt19937 rng(6);
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{2, 2}, {3, 5}, {17, 9}, {40, 31}}) {
        const auto s = random_slice(rng, h, w);
        const auto t = to_model_input(s);
        for (std::size_t y = 0; y < 224; y += 7)
            for (std::size_t x = 0; x < 224; x += 5) {
                const double expect = oracle::bilinear(s.pixels(), h, w, 224, 224, y, x) / 255.0;
                ASSERT_NEAR(t.at(y, x, 0), expect, 1e-6) << h << "x" << w << " at " << y << "," << x;
            }
    }
}

TEST(Resize, ShapeChannelsAndRange) {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto s = random_slice(rng, 2 + rng() % 300, 2 + rng() % 300);
        const auto t = to_model_input(s);
        ASSERT_EQ(t.values().size(), 224u * 224u * 3u);
        for (std::size_t i = 0; i < t.values().size(); i += 3) {
            ASSERT_EQ(t.values()[i], t.values()[i + 1]);
            ASSERT_EQ(t.values()[i], t.values()[i + 2]);
            ASSERT_GE(t.values()[i], 0.0f);
            ASSERT_LE(t.values()[i], 1.0f);
        }
    }
}

TEST(Resize, DegenerateInput) {
    try {
        to_model_input(SliceImage(1, 50, std::uint8_t{0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateInput);
    }
}

TEST(PreprocessVolume, FusedEqualsStepByStep) {
    std::mt19937 rng(8);
    CtVolume v;
    for (int i = 0; i < 12; ++i) v.slices.push_back(random_slice(rng, 512, 512));
    const auto fused = preprocess_volume(v, SelectionPolicy{}, CropSpec{});
    const auto kept = select_central_slices(v, SelectionPolicy{});
    ASSERT_EQ(fused.size(), kept.slices.size());
    for (std::size_t i = 0; i < fused.size(); ++i) {
        const auto stepwise = to_model_input(crop_slice(kept.slices[i], resolve_window(CropSpec{}, 512, 512)));
        ASSERT_EQ(fused[i], stepwise) << i;
    }
}

TEST(PreprocessVolume, TensorCounts) {
    for (auto [n, expect] : {std::pair<std::size_t, std::size_t>{100, 60}, {1, 1}, {700, 420}}) {
        CtVolume v;
        v.slices.assign(n, SliceImage(512, 512, std::uint8_t{3}));
        const auto out = preprocess_volume(v, SelectionPolicy{}, CropSpec{});
        EXPECT_EQ(out.size(), expect) << n;
        EXPECT_EQ(out.front().values().size(), ModelInputTensor::kSize);
    }
}

TEST(PreprocessVolume, OrderFollowsKeptSlices) {
    CtVolume v;
    for (int i = 0; i < 10; ++i) v.slices.emplace_back(512, 512, static_cast<std::uint8_t>(i * 20));
    const auto out = preprocess_volume(v, SelectionPolicy{}, CropSpec{});
    ASSERT_EQ(out.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(out[i].at(0, 0, 0), static_cast<float>((i + 2) * 20 / 255.0));
}

TEST(PreprocessVolume, Deterministic) {
    std::mt19937 rng(9);
    CtVolume v;
    for (int i = 0; i < 5; ++i) v.slices.push_back(random_slice(rng, 300, 280));
    EXPECT_EQ(preprocess_volume(v, SelectionPolicy{}, CropSpec{}), preprocess_volume(v, SelectionPolicy{}, CropSpec{}));
}
