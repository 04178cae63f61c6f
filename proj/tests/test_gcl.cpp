// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "wscod/gcl.hpp"
#include "wscod/gradcheck.hpp"
#include "wscod/params.hpp"

using namespace wscod;
using namespace wscod::gcl;

namespace {

Array uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array a(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : a.data) {
        v = d(rng);
    }
    return a;
}

Tensor vec(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Array({n}, std::move(v)));
}

PrototypeSet set_of(std::optional<Tensor> bg, std::vector<std::optional<Tensor>> fg) {
    PrototypeSet s;
    s.background = std::move(bg);
    s.foreground = std::move(fg);
    return s;
}

}  // namespace

TEST(GradCam, OutputInUnitRange) {
    Rng rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        const Array cam = grad_cam_from_gradient(uniform({4, 5, 6}, rng), uniform({4, 5, 6}, rng));
        for (double v : cam.data) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(GradCam, SingleChannelUniformGradientNormalizesRelu) {
    const Array f({1, 2, 3}, {-1.0, 0.0, 1.0, 2.0, 3.0, 4.0});
    const Array cam = grad_cam_from_gradient(f, Array({1, 2, 3}, 0.5));
    const double expect[] = {0.0, 0.0, 0.25, 0.5, 0.75, 1.0};
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_NEAR(cam[i], expect[i], 1e-11);
    }
}

TEST(GradCam, ConstantMapIsAllOnes) {
    const Array cam = grad_cam_from_gradient(Array({2, 3, 3}, 0.7), Array({2, 3, 3}, 1.0));
    EXPECT_EQ(cam, Array({3, 3}, 1.0));
    // Negative weights clip everything to zero, which is also constant.
    EXPECT_EQ(grad_cam_from_gradient(Array({1, 2, 2}, 1.0), Array({1, 2, 2}, -1.0)), Array({2, 2}, 1.0));
}

TEST(GradCam, UsesItsOwnChannel) {
    Tape tape;
    const Tensor w = tape.leaf(Array({1}, 2.0));
    const Tensor f = tape.watch(Tensor(Array({1, 2, 2}, {1.0, 2.0, 3.0, 4.0}))) * w;
    const Tensor score = sum(f);
    const Array cam = grad_cam(f, score);
    EXPECT_NEAR(cam[0], 0.0, 1e-12);
    EXPECT_NEAR(cam[3], 1.0, 1e-12);
    // A separate training root still sweeps cleanly afterwards.
    const auto ch = tape.backward(sum(square(f)));
    EXPECT_TRUE(ch.has(w));
    EXPECT_THROW(grad_cam(f, f), std::logic_error);
}

TEST(WeightedBackground, Examples) {
    const Array bg({2, 2}, {1.0, 0.0, 1.0, 1.0});
    EXPECT_EQ(weighted_bg_mask(bg, Array({2, 2}, 1.0)), bg);
    EXPECT_EQ(weighted_bg_mask(Array({2, 2}, 0.0), Array({2, 2}, 0.4)), Array({2, 2}, 0.0));
    const Array m = weighted_bg_mask(bg, Array({2, 2}, 0.3));
    EXPECT_EQ(m[0], 0.3);
    EXPECT_EQ(m[1], 0.0);
    Rng rng(2);
    const Array cam = uniform({2, 2}, rng, 0.0, 1.0);
    const Array w = weighted_bg_mask(bg, cam);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_LE(w[i], bg[i]);
    }
    EXPECT_THROW(weighted_bg_mask(bg, Array({3, 2})), ShapeError);
}

TEST(Downsample, AreaMajority) {
    Array m({4, 4}, 0.0);
    m[0] = m[1] = 1.0;          // half of cell (0,0)
    m[2] = 1.0;                 // quarter of cell (0,1)
    m[10] = m[11] = m[15] = 1.0;  // three quarters of cell (1,1)
    EXPECT_EQ(downsample_majority(m, 2), Array({2, 2}, {1.0, 0.0, 0.0, 1.0}));
    EXPECT_THROW(downsample_majority(m, 3), ShapeError);
}

TEST(Prototype, Examples) {
    // Uniform unit feature e over the mask.
    Array f({2, 1, 3});
    for (std::size_t i = 0; i < 3; ++i) {
        f[i] = 0.6;
        f[3 + i] = 0.8;
    }
    auto set = prototype_pool(Tensor(f), {Array({1, 3}, {1.0, 1.0, 0.0})}, Array({1, 3}, {0.0, 0.0, 1.0}));
    ASSERT_TRUE(set.foreground[0]);
    EXPECT_NEAR(set.foreground[0]->values()[0], 0.6, 1e-15);
    EXPECT_NEAR(set.foreground[0]->values()[1], 0.8, 1e-15);

    // Two pixels with features u = (1, 0), v = (0, 1).
    const Array uv({2, 1, 2}, {1.0, 0.0, 0.0, 1.0});
    set = prototype_pool(Tensor(uv), {Array({1, 2}, 1.0)}, Array({1, 2}, {0.2, 0.8}));
    EXPECT_EQ(set.foreground[0]->array(), Array({2}, {0.5, 0.5}));
    EXPECT_NEAR(set.background->values()[0], 0.2, 1e-15);
    EXPECT_NEAR(set.background->values()[1], 0.8, 1e-15);
}

TEST(Prototype, EmptyMaskIsSkippedAndRecorded) {
    const Array f({2, 1, 2}, {1.0, 0.0, 0.0, 1.0});
    const auto set = prototype_pool(Tensor(f), {Array({1, 2}, 0.0), Array({1, 2}, {1.0, 0.0})}, Array({1, 2}, 0.0));
    EXPECT_FALSE(set.background);
    EXPECT_FALSE(set.foreground[0]);
    EXPECT_TRUE(set.foreground[1]);
    EXPECT_EQ(set.skipped, std::vector<std::size_t>{0});
}

TEST(Prototype, NormAtMostOne) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor f = l2_normalize_channels(Tensor(uniform({5, 4, 4}, rng)));
        Array mask = uniform({4, 4}, rng, 0.0, 1.0);
        for (auto& v : mask.data) {
            v = v > 0.4 ? 1.0 : 0.0;
        }
        mask[0] = 1.0;
        const auto set = prototype_pool(f, {mask}, uniform({4, 4}, rng, 0.0, 1.0));
        double n = 0.0;
        for (double v : set.foreground[0]->values()) {
            n += v * v;
        }
        EXPECT_LE(std::sqrt(n), 1.0 + 1e-12);
    }
}

TEST(Contrastive, ZeroSimilaritiesGiveZero) {
    const auto s = set_of(std::nullopt, {vec({1.0, 0.0})});
    const auto t = set_of(vec({0.0, 1.0}), {vec({0.0, 1.0})});
    EXPECT_EQ(gcl_loss(s, t, 1.0).loss.item(), 0.0);
}

TEST(Contrastive, AlignedPairOrthogonalBackground) {
    const auto s = set_of(std::nullopt, {vec({1.0, 0.0})});
    const auto t = set_of(vec({0.0, 1.0}), {vec({1.0, 0.0})});
    const auto r = gcl_loss(s, t, 0.07);
    EXPECT_NEAR(r.loss.item(), -1.0 / 0.07, 1e-12);
    EXPECT_EQ(r.instances, 1u);
    EXPECT_TRUE(r.warning.empty());
}

TEST(Contrastive, ShiftInvariance) {
    // Appending a coordinate that is 1 on every prototype adds the same constant to every logit.
    Rng rng(4);
    auto proto = [&](double extra) {
        const Array a = uniform({3}, rng);
        return std::vector<double>{a[0], a[1], a[2], extra};
    };
    std::vector<std::vector<double>> ps, pt;
    for (int i = 0; i < 3; ++i) {
        ps.push_back(proto(0.0));
        pt.push_back(proto(0.0));
    }
    auto build = [](const std::vector<std::vector<double>>& p, double extra) {
        std::vector<std::optional<Tensor>> out;
        for (auto v : p) {
            v[3] = extra;
            out.push_back(vec(v));
        }
        return out;
    };
    std::vector<double> bg = proto(0.0);
    const double base = gcl_loss(set_of(std::nullopt, build(ps, 0.0)), set_of(vec(bg), build(pt, 0.0)), 0.5).loss.item();
    bg[3] = 1.0;
    const double shifted =
        gcl_loss(set_of(std::nullopt, build(ps, 1.0)), set_of(vec(bg), build(pt, 1.0)), 0.5).loss.item();
    EXPECT_NEAR(base, shifted, 1e-12);
}

TEST(Contrastive, NoInstancesOrEmptyDenominatorGiveZeroWithWarning) {
    const auto none = gcl_loss(set_of(std::nullopt, {std::nullopt}), set_of(vec({1.0}), {vec({1.0})}), 0.1);
    EXPECT_EQ(none.loss.item(), 0.0);
    EXPECT_FALSE(none.warning.empty());
    const auto lonely = gcl_loss(set_of(std::nullopt, {vec({1.0})}), set_of(std::nullopt, {vec({1.0})}), 0.1);
    EXPECT_EQ(lonely.loss.item(), 0.0);
    EXPECT_FALSE(lonely.warning.empty());
}

TEST(Contrastive, TeacherReceivesNoGradient) {
    Tape tape;
    const Tensor s = tape.leaf(Array({2}, {0.3, 0.4}));
    const Tensor t = tape.leaf(Array({2}, {0.5, -0.2}));
    const Tensor bg = tape.leaf(Array({2}, {0.1, 0.9}));
    const auto r = gcl_loss(set_of(std::nullopt, {s}), set_of(bg, {t}), 0.07);
    const auto ch = tape.backward(r.loss);
    EXPECT_TRUE(ch.has(s));
    EXPECT_FALSE(ch.has(t));
    EXPECT_FALSE(ch.has(bg));
}

TEST(Contrastive, GradientsMatchFiniteDifferences) {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 3, h = 3, w = 4, n = 1 + trial % 3;
        std::vector<Array> masks;
        for (std::size_t j = 0; j < n; ++j) {
            Array m({h, w}, 0.0);
            m[j * 3] = m[j * 3 + 1] = 1.0;
            masks.push_back(m);
        }
        const Array bg = uniform({h, w}, rng, 0.0, 1.0);
        const Array teacher_features = uniform({d, h, w}, rng);
        const auto f = [&](const std::vector<Tensor>& in) {
            const auto ps = prototype_pool(l2_normalize_channels(in[0]), masks, bg);
            const auto pt = prototype_pool(l2_normalize_channels(Tensor(teacher_features)), masks, bg);
            return gcl_loss(ps, pt, 0.5).loss;
        };
        EXPECT_LE(gradcheck::check(f, {uniform({d, h, w}, rng)}).max_rel_error, 1e-5) << trial;
    }
}

TEST(Total, Examples) {
    const Tensor one = Tensor::scalar(1.0);
    const Tensor zero = Tensor::scalar(0.0);
    EXPECT_EQ(total_stage1_loss({zero, zero, zero, zero}, {}).item(), 0.0);
    EXPECT_EQ(total_stage1_loss({one, one, one, one}, {0.5, 1.0, 20.0}).item(), 22.5);
    const Tensor big = Tensor::scalar(123.0);
    EXPECT_EQ(total_stage1_loss({one, one, big, one}, {0.5, 0.0, 20.0}).item(),
              total_stage1_loss({one, one, zero, one}, {0.5, 0.0, 20.0}).item());
}

TEST(Total, NonFiniteTermNamed) {
    const Tensor one = Tensor::scalar(1.0);
    try {
        (void)total_stage1_loss({one, one, Tensor::scalar(std::nan("")), one}, {});
        FAIL();
    } catch (const std::domain_error& e) {
        EXPECT_NE(std::string(e.what()).find("gcl"), std::string::npos);
    }
}
