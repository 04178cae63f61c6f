// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "wscod/checkpoint.hpp"

using namespace wscod;

namespace {

ckpt::Checkpoint sample_checkpoint() {
    ckpt::Checkpoint c;
    c.kind = "stage1";
    c.config_hash = "0123abcd";
    c.step = 42;
    c.meta["seed"] = "7";
    c.meta["note"] = std::string("with\0nul", 8);
    ParameterSet p;
    Rng rng(3);
    p.add("a.w", random_normal({2, 3}, 1.0, rng));
    p.add("a.b", Array({3}, 0.0), false);
    p.add("odd", Array({1}, {-0.0}));
    p.add("extremes", Array({4}, {std::numeric_limits<double>::min(), std::numeric_limits<double>::max(),
                                   std::numeric_limits<double>::infinity(), 1.0 / 3.0}));
    c.set_group("student", p);
    c.set_group("empty", ParameterSet{});
    return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
    const auto c = sample_checkpoint();
    const std::string bytes = ckpt::serialize(c);
    const auto back = ckpt::deserialize(bytes);
    EXPECT_EQ(back.kind, c.kind);
    EXPECT_EQ(back.config_hash, c.config_hash);
    EXPECT_EQ(back.step, 42u);
    EXPECT_EQ(back.meta, c.meta);
    ASSERT_EQ(back.groups.size(), 2u);
    EXPECT_TRUE(back.group("student") == c.group("student"));
    EXPECT_FALSE(back.group("student").trainable("a.b"));
    EXPECT_TRUE(std::signbit(back.group("student").at("odd")[0]));
    EXPECT_EQ(back.group("empty").size(), 0u);
    EXPECT_EQ(ckpt::serialize(back), bytes);
}

TEST(Checkpoint, SaveLoadThroughFile) {
    const auto path = std::filesystem::temp_directory_path() / "wscod_ckpt_test" / "c.ck";
    std::filesystem::remove_all(path.parent_path());
    const auto c = sample_checkpoint();
    ckpt::save(c, path);
    EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
    EXPECT_EQ(ckpt::serialize(ckpt::load(path)), ckpt::serialize(c));
    std::filesystem::remove_all(path.parent_path());
}

TEST(Checkpoint, RejectsCorruptInput) {
    const std::string bytes = ckpt::serialize(sample_checkpoint());
    EXPECT_THROW(ckpt::deserialize(""), std::runtime_error);
    EXPECT_THROW(ckpt::deserialize("NOTACKPT" + bytes.substr(8)), std::runtime_error);
    EXPECT_THROW(ckpt::deserialize(bytes.substr(0, bytes.size() - 1)), std::runtime_error);
    EXPECT_THROW(ckpt::deserialize(bytes + "x"), std::runtime_error);
    std::string bad_version = bytes;
    bad_version[8] = 9;
    EXPECT_THROW(ckpt::deserialize(bad_version), std::runtime_error);
    EXPECT_THROW(ckpt::load("/nonexistent/wscod.ck"), std::runtime_error);
}

TEST(Checkpoint, MissingGroupAndMetaThrow) {
    const auto c = sample_checkpoint();
    EXPECT_TRUE(c.has_group("student"));
    EXPECT_FALSE(c.has_group("teacher"));
    EXPECT_THROW((void)c.group("teacher"), std::out_of_range);
    EXPECT_EQ(c.meta_at("seed"), "7");
    EXPECT_THROW((void)c.meta_at("lr"), std::out_of_range);
}

TEST(Checkpoint, SetGroupReplacesInPlace) {
    auto c = sample_checkpoint();
    ParameterSet p;
    p.add("x", Array({1}, 2.0));
    c.set_group("student", p);
    ASSERT_EQ(c.groups.size(), 2u);
    EXPECT_EQ(c.groups.front().first, "student");
    EXPECT_EQ(c.group("student").at("x")[0], 2.0);
}

TEST(Checkpoint, MapConversionRoundTrips) {
    std::map<std::string, Array> m{{"v.a", Array({2}, 1.5)}, {"v.b", Array({1, 1}, -2.0)}};
    const auto p = ckpt::from_map(m);
    EXPECT_FALSE(p.trainable("v.a"));
    const auto back = ckpt::to_map(p);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.at("v.b").shape, (Shape{1, 1}));
    EXPECT_EQ(back.at("v.a").data, m.at("v.a").data);
}

TEST(Checkpoint, ParamsHashSeesValuesNamesAndShapes) {
    ParameterSet a;
    a.add("w", Array({2}, {1.0, 2.0}));
    ParameterSet b = a;
    EXPECT_EQ(ckpt::params_hash(a), ckpt::params_hash(b));
    b.at("w")[1] = std::nextafter(2.0, 3.0);
    EXPECT_NE(ckpt::params_hash(a), ckpt::params_hash(b));
    ParameterSet c;
    c.add("v", Array({2}, {1.0, 2.0}));
    EXPECT_NE(ckpt::params_hash(a), ckpt::params_hash(c));
    ParameterSet d;
    d.add("w", Array({1, 2}, {1.0, 2.0}));
    EXPECT_NE(ckpt::params_hash(a), ckpt::params_hash(d));
}
