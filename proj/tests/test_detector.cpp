// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "wscod/detector.hpp"

using namespace wscod;
using namespace wscod::det;

namespace {

DetectorDims small_dims() {
    DetectorDims d;
    d.image = 32;
    d.channels = 8;
    d.reduction = 4;
    return d;
}

Array test_image(std::size_t side, std::size_t index = 0) {
    data::GeneratorParams gp;
    gp.height = side;
    gp.width = side;
    gp.seed = 5;
    return data::generate_sample(gp, index).image;
}

}  // namespace

TEST(Detector, DimsValidation) {
    EXPECT_NO_THROW(DetectorDims{}.validate());
    EXPECT_THROW((DetectorDims{36, 8, 4}.validate()), std::invalid_argument);
    EXPECT_THROW((DetectorDims{16, 8, 4}.validate()), std::invalid_argument);
    EXPECT_THROW((DetectorDims{32, 8, 3}.validate()), std::invalid_argument);
}

TEST(Detector, ZeroParametersGiveHalfProbability) {
    const auto dims = small_dims();
    Rng rng(1);
    auto params = init_detector(dims, rng);
    for (auto& e : params.entries()) {
        e.value.data.assign(e.value.size(), 0.0);
    }
    for (bool msfa : {false, true}) {
        const Array p = predict(params, dims, test_image(32), msfa);
        ASSERT_EQ(p.shape, (Shape{32, 32}));
        for (double v : p.data) {
            ASSERT_EQ(v, 0.5);
        }
    }
}

TEST(Detector, ProbabilitiesInUnitIntervalAndDeterministic) {
    const auto dims = small_dims();
    Rng rng(2);
    const auto params = init_detector(dims, rng);
    const Array image = test_image(32);
    const Array p = predict(params, dims, image, true);
    for (double v : p.data) {
        ASSERT_GT(v, 0.0);
        ASSERT_LT(v, 1.0);
    }
    EXPECT_EQ(predict(params, dims, image, true).data, p.data);
    EXPECT_NE(predict(params, dims, image, false).data, p.data);
}

TEST(Detector, WrongImageSizeThrows) {
    const auto dims = small_dims();
    Rng rng(3);
    const auto params = init_detector(dims, rng);
    EXPECT_THROW(predict(params, dims, test_image(64), true), ShapeError);
}

TEST(Detector, BrightnessOffsetCancelsOut) {
    const auto dims = small_dims();
    Rng rng(4);
    const auto params = init_detector(dims, rng);
    const Array image = test_image(32);
    Array shifted = image;
    for (auto& v : shifted.data) {
        v += 0.25;
    }
    const Array a = predict(params, dims, image, true);
    const Array b = predict(params, dims, shifted, true);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_NEAR(a[i], b[i], 1e-9);
    }
}

TEST(Detector, TrainingIsSeededAndLogsProgress) {
    const auto dims = small_dims();
    std::vector<LabeledImage> data;
    for (std::size_t i = 0; i < 3; ++i) {
        Array label(Shape{32, 32}, 0.0);
        for (std::size_t y = 8; y < 20; ++y) {
            for (std::size_t x = 10; x < 24; ++x) {
                label[y * 32 + x] = 1.0;
            }
        }
        data.push_back({test_image(32, i), label});
    }
    Stage2Options opt;
    opt.epochs = 2;
    opt.batch = 2;
    std::vector<Stage2Step> log;
    const auto a = train_stage2(dims, data, opt, [&](const Stage2Step& s) { log.push_back(s); });
    ASSERT_EQ(log.size(), 4u);
    EXPECT_EQ(log.front().t, 0.0);
    EXPECT_EQ(log.back().t, 0.75);
    for (std::size_t i = 1; i < log.size(); ++i) {
        EXPECT_GT(log[i].t, log[i - 1].t);
        EXPECT_LE(log[i].lr, log[i - 1].lr);
    }
    const auto b = train_stage2(dims, data, opt, nullptr);
    EXPECT_TRUE(a == b);
    opt.seed = 1;
    EXPECT_FALSE(train_stage2(dims, data, opt, nullptr) == a);
}

TEST(Detector, TrainingRejectsEmptyData) {
    EXPECT_THROW(train_stage2(small_dims(), {}, Stage2Options{}, nullptr), std::invalid_argument);
}

TEST(Detector, MsfaAblationLeavesBlocksUntouched) {
    const auto dims = small_dims();
    std::vector<LabeledImage> data{{test_image(32), Array(Shape{32, 32}, 1.0)}};
    Stage2Options opt;
    opt.epochs = 1;
    opt.with_msfa = false;
    Rng rng(derive_seed(opt.seed, {0xde7}));
    const auto init = init_detector(dims, rng);
    const auto trained = train_stage2(dims, data, opt, nullptr);
    EXPECT_EQ(trained.at("stage1.msfa.fuse.spa").data, init.at("stage1.msfa.fuse.spa").data);
    EXPECT_NE(trained.at("stem.w").data, init.at("stem.w").data);
}
