// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "wscod/config.hpp"

using namespace wscod;

namespace {

std::string error_of(const std::string& text) {
    try {
        (void)parse_config(text);
    } catch (const std::invalid_argument& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
    const RunConfig c = parse_config("{}");
    const RunConfig d;
    EXPECT_EQ(c.to_json(), d.to_json());
    EXPECT_EQ(c.hash(), d.hash());
    EXPECT_EQ(c.stage1.lr, 5e-3);
    EXPECT_EQ(c.stage1.ema, 0.99);
    EXPECT_EQ(c.stage1.tau, 0.07);
}

TEST(Config, RoundTripsThroughJson) {
    RunConfig c;
    c.seed = 17;
    c.stage1.lambda_gcl = 0.25;
    c.stage1.augment.noise_std = 0.125;
    c.ablate.msfa = true;
    const RunConfig back = parse_config(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(back.hash(), c.hash());
}

TEST(Config, RejectsUnknownKeysAtAnyDepth) {
    EXPECT_NE(error_of(R"({"sed": 1})").find("'sed'"), std::string::npos);
    EXPECT_NE(error_of(R"({"stage1": {"lamda_gcl": 1}})").find("'stage1.lamda_gcl'"), std::string::npos);
    EXPECT_NE(error_of(R"({"stage1": {"augment": {"blur": 1}}})").find("'stage1.augment.blur'"), std::string::npos);
}

TEST(Config, RejectsWrongTypes) {
    EXPECT_NE(error_of(R"({"seed": "3"})").find("seed must be a non-negative integer"), std::string::npos);
    EXPECT_NE(error_of(R"({"seed": -3})").find("seed"), std::string::npos);
    EXPECT_NE(error_of(R"({"stage1": {"lr": "fast"}})").find("stage1.lr must be a number"), std::string::npos);
    EXPECT_NE(error_of(R"({"ablate": {"gcl": 1}})").find("ablate.gcl must be a boolean"), std::string::npos);
    EXPECT_NE(error_of(R"({"out": 5})").find("out must be a string"), std::string::npos);
    EXPECT_NE(error_of(R"({"stage1": 5})").find("must be a JSON object"), std::string::npos);
    EXPECT_NE(error_of("{").find("not valid JSON"), std::string::npos);
}

TEST(Config, RejectsOutOfRangeValues) {
    EXPECT_NE(error_of(R"({"stage1": {"ema": 1.5}})").find("stage1.ema"), std::string::npos);
    EXPECT_NE(error_of(R"({"stage1": {"tau": 0}})").find("stage1.tau"), std::string::npos);
    EXPECT_NE(error_of(R"({"workers": 0})").find("workers"), std::string::npos);
    EXPECT_NE(error_of(R"({"data": {"height": 32, "width": 64}})").find("square"), std::string::npos);
    EXPECT_NE(error_of(R"({"data": {"height": 32, "width": 32}})").find("segmenter.image"), std::string::npos);
    EXPECT_EQ(error_of(R"({"data": {"height": 32, "width": 32}, "segmenter": {"image": 32}})"), "");
}

TEST(Config, HashIgnoresOutputLocationAndWorkers) {
    RunConfig a;
    RunConfig b = a;
    b.out = "elsewhere";
    b.workers = 8;
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 16u);
    b.seed = 1;
    EXPECT_NE(a.hash(), b.hash());
    RunConfig c = a;
    c.stage1.augment.max_shift = 0.0625;
    EXPECT_NE(a.hash(), c.hash());
    RunConfig d = a;
    apply_ablation(d, "fora");
    EXPECT_NE(a.hash(), d.hash());
}

TEST(Config, AblationsReachTheTrainingOptions) {
    RunConfig c;
    EXPECT_TRUE(c.stage1_options().fora_stages);
    EXPECT_EQ(c.stage1_options().weights.gcl, 1.0);
    EXPECT_TRUE(c.stage2_options().with_msfa);
    apply_ablation(c, "fora");
    apply_ablation(c, "gcl");
    apply_ablation(c, "msfa");
    EXPECT_FALSE(c.stage1_options().fora_stages);
    EXPECT_EQ(c.stage1_options().weights.gcl, 0.0);
    EXPECT_EQ(c.stage1_options().weights.anchor, 0.5);
    EXPECT_FALSE(c.stage2_options().with_msfa);
    EXPECT_THROW(apply_ablation(c, "anchor"), std::invalid_argument);
}

TEST(Config, OptionsCarryTheRunSeed) {
    RunConfig c;
    c.seed = 42;
    EXPECT_EQ(c.stage1_schedule().seed, 42u);
    EXPECT_EQ(c.stage2_options().seed, 42u);
    EXPECT_EQ(c.stage1_schedule().epochs, c.stage1.epochs);
    EXPECT_EQ(c.stage1_schedule().lr, c.stage1.lr);
}

TEST(Config, LoadNamesTheFile) {
    const auto path = std::filesystem::temp_directory_path() / "wscod_test_config.json";
    std::ofstream(path) << R"({"stage2": {"epochs": 0}})";
    try {
        (void)load_config(path);
        FAIL() << "expected an error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("stage2"), std::string::npos);
    }
    std::filesystem::remove(path);
    EXPECT_THROW((void)load_config(path), std::runtime_error);
}
