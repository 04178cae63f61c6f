// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "wscod/gradcheck.hpp"
#include "wscod/msfa.hpp"

using namespace wscod;
using namespace wscod::msfa;

namespace {

Array uniform(Shape shape, Rng& rng, double scale = 1.0) {
    Array a(std::move(shape));
    std::uniform_real_distribution<double> d(-scale, scale);
    for (auto& v : a.data) {
        v = d(rng);
    }
    return a;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    EXPECT_EQ(a.shape(), b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    }
    return m;
}

ScaleWeights zero_weights(std::size_t c, std::size_t hidden) {
    ScaleWeights w;
    for (auto& p : w) {
        p = {Tensor(Array({hidden, c}, 0.0)), Tensor(Array({c, hidden}, 0.0))};
    }
    return w;
}

MultiScaleFeatures random_features(Rng& rng, std::size_t c, std::size_t h, std::size_t w) {
    return {Tensor(uniform({c, h, w}, rng)), Tensor(uniform({c, h / 2, w / 2}, rng)),
            Tensor(uniform({c, h / 4, w / 4}, rng))};
}

}  // namespace

TEST(SpatialBranch, Examples) {
    Rng rng(1);
    const std::size_t c = 3;
    const Tensor f(uniform({c, 5, 4}, rng));
    const Tensor zero(Array({c, c, 3, 3}, 0.0));
    const Tensor zero_out = spatial_branch(f, zero, zero);
    for (double v : zero_out.values()) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_EQ(spatial_branch(f, Tensor(delta_kernel(c, 3)), Tensor(delta_kernel(c, 3))).array(), f.array());
    EXPECT_LE(max_abs_diff(spatial_branch(f, Tensor(delta_kernel(c, 3, 2.0)), Tensor(delta_kernel(c, 3, 3.0))), f * 6.0),
              1e-15);
}

TEST(FrequencyBranch, Examples) {
    Rng rng(2);
    const std::size_t c = 2;
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 4}, {6, 5}}) {
        const Tensor f(uniform({c, h, w}, rng));
        EXPECT_LE(max_abs_diff(frequency_branch(f, Tensor(delta_kernel(2 * c, 1))), f), 1e-9);
        const Tensor zero_out = frequency_branch(f, Tensor(Array({2 * c, 2 * c, 1, 1}, 0.0)));
        for (double v : zero_out.values()) {
            EXPECT_EQ(v, 0.0);
        }
        EXPECT_LE(max_abs_diff(frequency_branch(f, Tensor(delta_kernel(2 * c, 1, 2.0))), f * 2.0), 1e-9);
    }
    EXPECT_THROW(frequency_branch(Tensor(Array({2, 4, 4})), Tensor(Array({2, 2, 1, 1}))), ShapeError);
}

TEST(TriChannelAttention, ZeroWeightsOrContextsHalveInput) {
    Rng rng(3);
    const std::size_t c = 4;
    const Tensor x(uniform({c, 3, 3}, rng));
    const Contexts ctx{Tensor(uniform({c, 4, 4}, rng)), Tensor(uniform({c, 2, 2}, rng)), Tensor(uniform({c, 1, 1}, rng))};
    EXPECT_EQ(tri_channel_attention(x, ctx, zero_weights(c, 2)).array(), (x * 0.5).array());

    ScaleWeights w;
    for (auto& p : w) {
        p = {Tensor(uniform({2, c}, rng)), Tensor(uniform({c, 2}, rng))};
    }
    const Contexts zero{Tensor(Array({c, 4, 4}, 0.0)), Tensor(Array({c, 2, 2}, 0.0)), Tensor(Array({c, 1, 1}, 0.0))};
    EXPECT_EQ(tri_channel_attention(x, zero, w).array(), (x * 0.5).array());
}

TEST(TriChannelAttention, GateStrictlyInsideUnitInterval) {
    Rng rng(4);
    const std::size_t c = 4;
    for (int trial = 0; trial < 20; ++trial) {
        ScaleWeights w;
        for (auto& p : w) {
            p = {Tensor(uniform({2, c}, rng, 3.0)), Tensor(uniform({c, 2}, rng, 3.0))};
        }
        const Contexts ctx{Tensor(uniform({c, 4, 4}, rng)), Tensor(uniform({c, 2, 2}, rng)),
                           Tensor(uniform({c, 1, 1}, rng))};
        for (double g : channel_gate(ctx, w).array().data) {
            EXPECT_GT(g, 0.0);
            EXPECT_LT(g, 1.0);
        }
        const Tensor x(uniform({c, 2, 2}, rng));
        const Tensor y = tri_channel_attention(x, ctx, w);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            EXPECT_LT(std::abs(y.values()[i]), std::abs(x.values()[i]) + 1e-300);
        }
    }
    EXPECT_THROW(tri_channel_attention(Tensor(Array({3, 2, 2})), Contexts{Tensor(Array({c, 1, 1})),
                                                                           Tensor(Array({c, 1, 1})),
                                                                           Tensor(Array({c, 1, 1}))},
                                       zero_weights(c, 2)),
                 ShapeError);
}

class MsfaBlockTest : public ::testing::Test {
protected:
    void SetUp() override {
        Rng rng(5);
        add_block(params, "m", c, 2, rng);
    }
    std::size_t c = 4;
    ParameterSet params;
};

TEST_F(MsfaBlockTest, HasEighteenAttentionPairs) {
    std::size_t pairs = 0;
    for (const auto& e : params.entries()) {
        pairs += e.name.find(".att.") != std::string::npos && e.name.ends_with(".w1") ? 1 : 0;
    }
    EXPECT_EQ(pairs, 18u);
    ParameterSet bad;
    Rng rng(0);
    EXPECT_THROW(add_block(bad, "x", 4, 3, rng), std::invalid_argument);
}

TEST_F(MsfaBlockTest, ZeroFusionOrZeroInputGivesZero) {
    Rng rng(6);
    const auto feats = random_features(rng, c, 8, 8);
    ParameterSet p = params;
    p.at("m.fuse.spa") = Array(p.at("m.fuse.spa").shape, 0.0);
    p.at("m.fuse.fre") = Array(p.at("m.fuse.fre").shape, 0.0);
    const Tensor fused = msfa_forward(MsfaBlock::bind(BoundParameters(p, nullptr, Binding::Constant), "m"), feats);
    for (double v : fused.values()) {
        EXPECT_EQ(v, 0.0);
    }
    const MultiScaleFeatures zero{Tensor(Array({c, 8, 8}, 0.0)), Tensor(Array({c, 4, 4}, 0.0)),
                                  Tensor(Array({c, 2, 2}, 0.0))};
    const Tensor y = msfa_forward(MsfaBlock::bind(BoundParameters(params, nullptr, Binding::Constant), "m"), zero);
    EXPECT_EQ(y.shape(), (Shape{c, 8, 8}));
    for (double v : y.values()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST_F(MsfaBlockTest, IdentityChainMatchesDirectFusion) {
    Rng rng(7);
    const auto feats = random_features(rng, c, 8, 8);
    ParameterSet p = params;
    p.at("m.spa1") = delta_kernel(c, 3);
    p.at("m.spa2") = delta_kernel(c, 3);
    p.at("m.fre") = delta_kernel(2 * c, 1);
    const MsfaBlock block = MsfaBlock::bind(BoundParameters(p, nullptr, Binding::Constant), "m");
    const Tensor y = msfa_forward(block, feats, GateMode::Unit);
    const Tensor stacked =
        concat({feats.small, upsample_nearest(feats.medium, 2), upsample_nearest(feats.large, 4)});
    const Tensor direct = conv2d(stacked, Tensor(p.at("m.fuse.spa"))) + conv2d(stacked, Tensor(p.at("m.fuse.fre")));
    EXPECT_LE(max_abs_diff(y, direct), 1e-9);
}

TEST_F(MsfaBlockTest, RejectsMalformedScales) {
    const MsfaBlock block = MsfaBlock::bind(BoundParameters(params, nullptr, Binding::Constant), "m");
    const MultiScaleFeatures bad{Tensor(Array({c, 8, 8})), Tensor(Array({c, 3, 4})), Tensor(Array({c, 2, 2}))};
    EXPECT_THROW(msfa_forward(block, bad), ShapeError);
}

TEST_F(MsfaBlockTest, GradientsMatchFiniteDifferencesForEveryGroup) {
    Rng rng(8);
    const std::size_t small = 4;
    std::vector<std::string> names;
    std::vector<Array> values;
    for (const auto& e : params.entries()) {
        names.push_back(e.name);
        values.push_back(e.value);
    }
    for (int trial = 0; trial < 3; ++trial) {
        const auto feats = random_features(rng, c, small, small);
        const Array out_w = uniform({c, small, small}, rng);
        std::vector<Array> inputs = values;
        inputs.push_back(feats.small.array());
        inputs.push_back(feats.medium.array());
        inputs.push_back(feats.large.array());
        const auto f = [&](const std::vector<Tensor>& in) {
            // Rebuild the block around the tape leaves.
            ParameterSet shell;
            for (std::size_t i = 0; i < names.size(); ++i) {
                shell.add(names[i], in[i].array());
            }
            BoundParameters bound(shell, nullptr, Binding::Constant);
            MsfaBlock b = MsfaBlock::bind(bound, "m");
            auto pick = [&](const std::string& n) {
                return in[static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin())];
            };
            b.spa1 = pick("m.spa1");
            b.spa2 = pick("m.spa2");
            b.fre = pick("m.fre");
            b.fuse_spa = pick("m.fuse.spa");
            b.fuse_fre = pick("m.fuse.fre");
            for (std::size_t i = 0; i < 3; ++i) {
                for (std::size_t j = 0; j < 3; ++j) {
                    const std::string ij = std::to_string(i) + std::to_string(j);
                    b.att_fre[i][j] = {pick("m.att.fre." + ij + ".w1"), pick("m.att.fre." + ij + ".w2")};
                    b.att_spa[i][j] = {pick("m.att.spa." + ij + ".w1"), pick("m.att.spa." + ij + ".w2")};
                }
            }
            const std::size_t n = names.size();
            return sum(msfa_forward(b, {in[n], in[n + 1], in[n + 2]}) * Tensor(out_w));
        };
        EXPECT_LE(gradcheck::check(f, inputs).max_rel_error, 1e-5) << trial;
    }
}
