// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "wscod/segmenter.hpp"

using namespace wscod;

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

Tensor test_image(std::size_t side) {
    data::GeneratorParams gp;
    gp.height = side;
    gp.width = side;
    gp.seed = 3;
    return Tensor(data::generate_sample(gp, 0).image);
}

}  // namespace

TEST(Segmenter, OneMapPerPrompt) {
    const auto dims = small_dims();
    Rng rng(1);
    const auto params = seg::init_segmenter(dims, rng);
    const BoundParameters bound(params, nullptr, Binding::Constant);
    const Tensor image = test_image(dims.image);
    for (std::size_t n = 1; n <= 3; ++n) {
        std::vector<data::Box> boxes;
        for (std::size_t i = 0; i < n; ++i) {
            boxes.push_back({i * 4, i * 3, 10 + i * 4, 12 + i * 3});
        }
        const auto mb = seg::predict_masks(bound, dims, image, boxes, true);
        EXPECT_EQ(mb.prompts(), n);
        EXPECT_EQ(mb.probs.shape(), (Shape{n, dims.image, dims.image}));
        EXPECT_EQ(mb.binary.shape, mb.probs.shape());
    }
}

TEST(Segmenter, DuplicatePromptsGiveIdenticalMaps) {
    const auto dims = small_dims();
    Rng rng(2);
    const auto params = seg::init_segmenter(dims, rng);
    const BoundParameters bound(params, nullptr, Binding::Constant);
    const data::Box box{5, 6, 20, 25};
    const auto mb = seg::predict_masks(bound, dims, test_image(dims.image), {box, box}, true);
    const std::size_t hw = dims.image * dims.image;
    const auto logits = mb.logits.values();
    for (std::size_t i = 0; i < hw; ++i) {
        ASSERT_EQ(logits[i], logits[hw + i]);
    }
}

TEST(Segmenter, ZeroParametersGiveHalfProbability) {
    const auto dims = small_dims();
    Rng rng(3);
    auto params = seg::init_segmenter(dims, rng);
    for (auto& e : params.entries()) {
        std::fill(e.value.data.begin(), e.value.data.end(), 0.0);
    }
    const BoundParameters bound(params, nullptr, Binding::Constant);
    const auto mb = seg::predict_masks(bound, dims, test_image(dims.image), {{0, 0, 31, 31}, {3, 4, 9, 9}}, true);
    for (double p : mb.probs.values()) {
        ASSERT_EQ(p, 0.5);
    }
    for (double b : mb.binary.data) {
        ASSERT_EQ(b, 0.0);
    }
}

TEST(Segmenter, EmptyPromptListThrows) {
    const auto dims = small_dims();
    Rng rng(4);
    const auto params = seg::init_segmenter(dims, rng);
    const BoundParameters bound(params, nullptr, Binding::Constant);
    EXPECT_THROW(seg::predict_masks(bound, dims, test_image(dims.image), {}, true), std::invalid_argument);
}

TEST(Segmenter, WrongImageSizeThrows) {
    const auto dims = small_dims();
    Rng rng(5);
    const auto params = seg::init_segmenter(dims, rng);
    const BoundParameters bound(params, nullptr, Binding::Constant);
    EXPECT_THROW(seg::predict_masks(bound, dims, test_image(64), {{0, 0, 3, 3}}, true), ShapeError);
}

TEST(Segmenter, FreshAdaptersReproduceBaseOutput) {
    const auto dims = small_dims();
    Rng rng(6);
    auto params = seg::init_segmenter(dims, rng);
    const Tensor image = test_image(dims.image);
    const std::vector<data::Box> boxes{{2, 2, 20, 18}};
    const auto with_stages = seg::predict_masks(BoundParameters(params, nullptr, Binding::Constant), dims, image,
                                                boxes, true);
    const auto plain = seg::predict_masks(BoundParameters(params, nullptr, Binding::Constant), dims, image, boxes,
                                          false);
    const auto a = with_stages.logits.values();
    const auto b = plain.logits.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_NEAR(a[i], b[i], 1e-9);
    }
}

TEST(Segmenter, TrainableGroups) {
    const auto dims = small_dims();
    Rng rng(7);
    auto params = seg::init_segmenter(dims, rng);
    EXPECT_TRUE(params.trainable("block0.q.enc"));
    EXPECT_TRUE(params.trainable("dec.conv1.w"));
    EXPECT_FALSE(params.trainable("block0.q.base"));
    EXPECT_FALSE(params.trainable("embed.w"));
    seg::mark_pretraining_trainable(params);
    EXPECT_FALSE(params.trainable("block0.v.dec"));
    EXPECT_TRUE(params.trainable("embed.w"));
    EXPECT_TRUE(params.trainable("block0.k"));
    EXPECT_TRUE(seg::is_adapter_parameter("block1.v.fre"));
    EXPECT_FALSE(seg::is_adapter_parameter("dec.conv1.w"));
}

TEST(Segmenter, BaseWeightsGetNoGradientUnderAdaptation) {
    const auto dims = small_dims();
    Rng rng(8);
    const auto params = seg::init_segmenter(dims, rng);
    Tape tape;
    const BoundParameters bound(params, &tape, Binding::Trainable);
    const auto mb = seg::predict_masks(bound, dims, test_image(dims.image), {{4, 4, 20, 20}}, true);
    const auto ch = tape.backward(sum(mb.probs));
    const auto grads = bound.gradients(ch);
    EXPECT_FALSE(grads.contains("block0.q.base"));
    EXPECT_FALSE(grads.contains("embed.w"));
    ASSERT_TRUE(grads.contains("dec.conv3.w"));
    double norm = 0.0;
    for (double g : grads.at("dec.conv3.w").data) {
        norm += g * g;
    }
    EXPECT_GT(norm, 0.0);
}
