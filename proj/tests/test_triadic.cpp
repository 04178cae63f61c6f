// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "wscod/triadic.hpp"

using namespace wscod;
using namespace wscod::triadic;

namespace {

seg::SegmenterDims small_dims() {
    seg::SegmenterDims d;
    d.image = 32;
    d.patch = 4;
    d.dim = 16;
    d.blocks = 1;
    d.mlp = 16;
    d.rank = 2;
    d.decoder_hidden = 8;
    return d;
}

std::vector<data::Sample> samples(std::size_t n, std::size_t side = 32) {
    data::GeneratorParams gp;
    gp.height = side;
    gp.width = side;
    gp.seed = 11;
    std::vector<data::Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(data::generate_sample(gp, i));
    }
    return out;
}

TriadicModels small_models(std::uint64_t seed) {
    const auto dims = small_dims();
    Rng rng(4);
    auto base = seg::init_segmenter(dims, rng);
    seg::mark_adaptation_trainable(base);
    return make_models(base, dims, seed);
}

Array box_mask(const data::Box& b, std::size_t h, std::size_t w) {
    Array m(Shape{h, w}, 0.0);
    for (std::size_t y = b.row0; y <= b.row1; ++y) {
        for (std::size_t x = b.col0; x <= b.col1; ++x) {
            m[y * w + x] = 1.0;
        }
    }
    return m;
}

bool same_values(const ParameterSet& a, const ParameterSet& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (const auto& e : a.entries()) {
        if (e.value.data != b.at(e.name).data) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST(Warp, IdentityGeometryIsNoOp) {
    const auto s = samples(1).front();
    EXPECT_EQ(warp(s.image, Geometry{}, Border::Replicate).data, s.image.data);
    EXPECT_EQ(warp(s.masks[0], Geometry{}, Border::Zero).data, s.masks[0].data);
}

TEST(Warp, DoubleFlipIsIdentity) {
    const auto s = samples(1).front();
    const Geometry flip{true, 0, 0};
    EXPECT_EQ(warp(warp(s.image, flip, Border::Zero), flip, Border::Zero).data, s.image.data);
}

TEST(Warp, BoxFollowsWarpedMask) {
    const data::Box box{4, 6, 12, 20};
    for (const Geometry g : {Geometry{false, 3, -2}, Geometry{true, -4, 5}, Geometry{true, 0, 0}}) {
        const Array warped = warp(box_mask(box, 32, 32), g, Border::Zero);
        EXPECT_EQ(warped.data, box_mask(warp_box(box, g, 32), 32, 32).data);
    }
}

TEST(Warp, RejectsVectors) { EXPECT_THROW(warp(Array(Shape{5}), Geometry{}, Border::Zero), ShapeError); }

TEST(Augment, SameSeedSameViews) {
    const auto s = samples(1).front();
    const auto a = augment(s.image, s.boxes, 99);
    const auto b = augment(s.image, s.boxes, 99);
    EXPECT_EQ(a.weak.data, b.weak.data);
    EXPECT_EQ(a.strong.data, b.strong.data);
    EXPECT_EQ(a.geometry, b.geometry);
    EXPECT_EQ(a.boxes, b.boxes);
    EXPECT_NE(augment(s.image, s.boxes, 100).strong.data, a.strong.data);
}

TEST(Augment, BoxesStayInFrameAndCutoutAvoidsThem) {
    const auto all = samples(6);
    std::size_t with_cutout = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto& s = all[seed % all.size()];
        const auto pair = augment(s.image, s.boxes, seed);
        ASSERT_EQ(pair.boxes.size(), s.boxes.size());
        for (std::size_t i = 0; i < s.boxes.size(); ++i) {
            const auto& b = pair.boxes[i];
            EXPECT_LE(b.row1, 31u);
            EXPECT_LE(b.col1, 31u);
            EXPECT_EQ(b.row1 - b.row0, s.boxes[i].row1 - s.boxes[i].row0);
            EXPECT_EQ(b.col1 - b.col0, s.boxes[i].col1 - s.boxes[i].col0);
        }
        EXPECT_EQ(pair.weak.data, warp(s.image, pair.geometry, Border::Replicate).data);
        for (double v : pair.strong.data) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
        if (pair.cutout) {
            ++with_cutout;
            for (const auto& b : pair.boxes) {
                EXPECT_FALSE(b.intersects(*pair.cutout));
            }
            EXPECT_EQ(pair.strong[pair.cutout->row0 * 32 + pair.cutout->col0], 0.5);
        }
    }
    EXPECT_GT(with_cutout, 0u);
}

TEST(Augment, NoCutoutWhenBoxCoversFrame) {
    const auto s = samples(1).front();
    const auto pair = augment(s.image, {data::Box{0, 0, 31, 31}}, 3);
    EXPECT_FALSE(pair.cutout.has_value());
    EXPECT_EQ(pair.geometry.dy, 0);
    EXPECT_EQ(pair.geometry.dx, 0);
}

TEST(Triadic, ModelsStartIdentical) {
    const auto m = small_models(5);
    EXPECT_TRUE(same_values(m.anchor, m.student));
    EXPECT_TRUE(same_values(m.teacher, m.student));
    for (const auto& e : m.anchor.entries()) {
        EXPECT_FALSE(e.trainable) << e.name;
    }
    EXPECT_TRUE(m.student.trainable("block0.q.enc"));
    EXPECT_FALSE(m.student.trainable("block0.q.base"));
}

TEST(Triadic, AdapterSeedChangesOnlyAdapters) {
    const auto a = small_models(1);
    const auto b = small_models(2);
    EXPECT_NE(a.student.at("block0.q.enc").data, b.student.at("block0.q.enc").data);
    EXPECT_EQ(a.student.at("block0.q.base").data, b.student.at("block0.q.base").data);
}

TEST(Triadic, TeacherUpdateMixesWithStudent) {
    TriadicModels m;
    m.teacher.add("w", Array({2}, 1.0));
    m.student.add("w", Array({2}, 5.0));
    teacher_update(m, 1.0);
    EXPECT_EQ(m.teacher.at("w")[0], 1.0);
    teacher_update(m, 0.5);
    EXPECT_EQ(m.teacher.at("w")[0], 3.0);
    teacher_update(m, 0.0);
    EXPECT_EQ(m.teacher.at("w")[1], 5.0);
}

TEST(Triadic, StepTrainsStudentOnly) {
    auto m = small_models(7);
    const auto batch = samples(2);
    const ParameterSet anchor0 = m.anchor;
    const ParameterSet teacher0 = m.teacher;
    Sgd sgd;
    Stage1Options opt;
    const auto report = stage1_step(m, sgd, batch, {1, 2}, opt, 0.01);
    EXPECT_TRUE(report.teacher_grad_free);
    EXPECT_TRUE(std::isfinite(report.total));
    EXPECT_GT(report.grad_norm, 0.0);
    EXPECT_TRUE(same_values(m.anchor, anchor0));
    EXPECT_FALSE(same_values(m.student, teacher0));
    for (const auto& e : m.teacher.entries()) {
        const auto& t0 = teacher0.at(e.name);
        const auto& s = m.student.at(e.name);
        for (std::size_t i = 0; i < t0.size(); ++i) {
            ASSERT_NEAR(e.value[i], 0.99 * t0[i] + 0.01 * s[i], 1e-15) << e.name;
        }
    }
    for (const auto& e : m.student.entries()) {
        if (!e.trainable) {
            EXPECT_EQ(e.value.data, anchor0.at(e.name).data) << e.name;
        }
    }
}

TEST(Triadic, LossesAreDeterministic) {
    const auto m = small_models(3);
    const auto batch = samples(2);
    std::map<std::string, Array> g1;
    std::map<std::string, Array> g2;
    const auto r1 = stage1_losses(m, batch, {8, 9}, Stage1Options{}, &g1);
    const auto r2 = stage1_losses(m, batch, {8, 9}, Stage1Options{}, &g2);
    EXPECT_EQ(r1.total, r2.total);
    ASSERT_EQ(g1.size(), g2.size());
    for (const auto& [name, g] : g1) {
        EXPECT_EQ(g.data, g2.at(name).data) << name;
    }
}

TEST(Triadic, ZeroGclWeightSkipsContrast) {
    const auto m = small_models(3);
    Stage1Options opt;
    opt.weights.gcl = 0.0;
    const auto r = stage1_losses(m, samples(2), {1, 2}, opt, nullptr);
    EXPECT_EQ(r.gcl, 0.0);
    EXPECT_EQ(r.gcl_instances, 0u);
    const auto full = stage1_losses(m, samples(2), {1, 2}, Stage1Options{}, nullptr);
    EXPECT_EQ(full.dice, r.dice);
    EXPECT_EQ(full.focal, r.focal);
}

TEST(Triadic, BatchNeedsOneSeedPerSample) {
    const auto m = small_models(3);
    EXPECT_THROW(stage1_losses(m, samples(2), {1}, Stage1Options{}, nullptr), std::invalid_argument);
}

TEST(Stage1Schedule, EachEpochVisitsEverySampleOnce) {
    const Schedule s{2, 4, 0.1, 5};
    EXPECT_EQ(s.steps_per_epoch(10), 3u);
    EXPECT_EQ(s.total_steps(10), 6u);
    std::vector<std::size_t> first_epoch;
    for (std::size_t epoch = 0; epoch < 2; ++epoch) {
        std::multiset<std::size_t> seen;
        std::vector<std::size_t> order;
        for (std::size_t step = epoch * 3; step < epoch * 3 + 3; ++step) {
            for (auto i : s.batch_indices(10, step)) {
                seen.insert(i);
                order.push_back(i);
            }
        }
        EXPECT_EQ(seen.size(), 10u);
        EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 10u);
        if (epoch == 0) {
            first_epoch = order;
        } else {
            EXPECT_NE(order, first_epoch);
        }
    }
    EXPECT_EQ(s.batch_indices(10, 2).size(), 2u);
    EXPECT_NE(s.sample_seed(0, 0), s.sample_seed(0, 1));
}

TEST(PseudoLabel, UnionOfBinaryMasks) {
    const auto m = small_models(2);
    const auto s = samples(1).front();
    const auto label = pseudo_label(m.teacher, m.dims, s.image, s.boxes, true);
    const auto mb = seg::predict_masks(BoundParameters(m.teacher, nullptr, Binding::Constant), m.dims,
                                       Tensor(s.image), s.boxes, true);
    const std::size_t hw = 32 * 32;
    for (std::size_t i = 0; i < hw; ++i) {
        double expect = 0.0;
        for (std::size_t j = 0; j < s.boxes.size(); ++j) {
            expect = std::max(expect, mb.binary[j * hw + i]);
        }
        ASSERT_EQ(label[i], expect);
    }
    EXPECT_EQ(pseudo_label(m.teacher, m.dims, s.image, s.boxes, true).data, label.data);
}
