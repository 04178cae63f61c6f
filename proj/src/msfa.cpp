// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/msfa.hpp"

#include <cmath>

namespace wscod::msfa {

void MultiScaleFeatures::validate() const {
    for (const Tensor* t : {&small, &medium, &large}) {
        if (t->rank() != 3) {
            throw ShapeError("multi-scale features must be C x H x W, got " + shape_str(t->shape()));
        }
    }
    const std::size_t c = small.dim(0);
    if (medium.dim(0) != c || large.dim(0) != c) {
        throw ShapeError("multi-scale features disagree on channel count");
    }
    if (medium.dim(1) * 2 != small.dim(1) || medium.dim(2) * 2 != small.dim(2) || large.dim(1) * 2 != medium.dim(1) ||
        large.dim(2) * 2 != medium.dim(2)) {
        throw ShapeError("multi-scale features must halve per scale: " + shape_str(small.shape()) + ", " +
                         shape_str(medium.shape()) + ", " + shape_str(large.shape()));
    }
}

MultiScaleFeatures from_stage(const Tensor& f) { return {f, avg_pool2d(f, 2), avg_pool2d(f, 4)}; }

Tensor spatial_branch(const Tensor& f, const Tensor& k1, const Tensor& k2) { return conv2d(conv2d(f, k1), k2); }

Tensor frequency_branch(const Tensor& f, const Tensor& kernel) {
    if (f.rank() != 3) {
        throw ShapeError("frequency_branch expects C x H x W, got " + shape_str(f.shape()));
    }
    const std::size_t c = f.dim(0);
    if (kernel.shape() != Shape{2 * c, 2 * c, 1, 1}) {
        throw ShapeError("frequency kernel must be " + shape_str(Shape{2 * c, 2 * c, 1, 1}) + ", got " +
                         shape_str(kernel.shape()));
    }
    const ComplexTensor spectrum = fft2(f);
    const Tensor mixed = conv2d(concat({spectrum.real, spectrum.imag}), kernel);
    return ifft2(ComplexTensor{slice(mixed, 0, c), slice(mixed, c, c)}).real;
}

Tensor channel_gate(const Contexts& contexts, const ScaleWeights& weights) {
    Tensor gate;
    for (std::size_t j = 0; j < 3; ++j) {
        const Tensor pooled = global_avg_pool(contexts[j]);
        const Tensor g = sigmoid(linear(relu(linear(pooled, weights[j].w1)), weights[j].w2));
        gate = j == 0 ? g : gate + g;
    }
    return gate * (1.0 / 3.0);
}

Tensor tri_channel_attention(const Tensor& x, const Contexts& contexts, const ScaleWeights& weights) {
    const Tensor gate = channel_gate(contexts, weights);
    if (gate.numel() != x.dim(0)) {
        throw ShapeError("gate of " + std::to_string(gate.numel()) + " channels cannot scale " + shape_str(x.shape()));
    }
    return scale_channels(x, gate);
}

namespace {

std::string pair_name(std::size_t i, std::size_t j) { return std::to_string(i) + std::to_string(j); }

}  // namespace

MsfaBlock MsfaBlock::bind(const BoundParameters& params, const std::string& prefix) {
    MsfaBlock b;
    b.spa1 = params[prefix + ".spa1"];
    b.spa2 = params[prefix + ".spa2"];
    b.fre = params[prefix + ".fre"];
    b.fuse_spa = params[prefix + ".fuse.spa"];
    b.fuse_fre = params[prefix + ".fuse.fre"];
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            const std::string ij = pair_name(i, j);
            b.att_fre[i][j] = {params[prefix + ".att.fre." + ij + ".w1"], params[prefix + ".att.fre." + ij + ".w2"]};
            b.att_spa[i][j] = {params[prefix + ".att.spa." + ij + ".w1"], params[prefix + ".att.spa." + ij + ".w2"]};
        }
    }
    return b;
}

void add_block(ParameterSet& params, const std::string& prefix, std::size_t channels, std::size_t reduction,
               Rng& rng) {
    if (reduction < 1 || channels % reduction != 0) {
        throw std::invalid_argument("reduction ratio must be >= 1 and divide the channel count");
    }
    const std::size_t c = channels;
    const std::size_t hidden = c / reduction;
    // Spatial kernels start near the identity, the frequency mix at the identity.
    auto near_delta = [&](std::size_t k) {
        Array a = delta_kernel(c, k);
        const Array noise = random_normal(a.shape, 0.02, rng);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] += noise[i];
        }
        return a;
    };
    params.add(prefix + ".spa1", near_delta(3));
    params.add(prefix + ".spa2", near_delta(3));
    Array fre = delta_kernel(2 * c, 1);
    const Array noise = random_normal(fre.shape, 0.02, rng);
    for (std::size_t i = 0; i < fre.size(); ++i) {
        fre[i] += noise[i];
    }
    params.add(prefix + ".fre", std::move(fre));
    for (const char* domain : {"fre", "spa"}) {
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                const std::string name = prefix + ".att." + domain + "." + pair_name(i, j);
                params.add(name + ".w1", random_normal({hidden, c}, 1.0 / std::sqrt(static_cast<double>(c)), rng));
                params.add(name + ".w2",
                           random_normal({c, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng));
            }
        }
    }
    const double fuse_std = 1.0 / std::sqrt(static_cast<double>(3 * c));
    params.add(prefix + ".fuse.spa", random_normal({c, 3 * c, 1, 1}, fuse_std, rng));
    params.add(prefix + ".fuse.fre", random_normal({c, 3 * c, 1, 1}, fuse_std, rng));
}

Tensor msfa_forward(const MsfaBlock& block, const MultiScaleFeatures& feats, GateMode mode) {
    feats.validate();
    if (feats.small.dim(0) != block.channels()) {
        throw ShapeError("block expects " + std::to_string(block.channels()) + " channels, features have " +
                         std::to_string(feats.small.dim(0)));
    }
    const std::array<Tensor, 3> inputs{feats.small, feats.medium, feats.large};
    Contexts spa;
    Contexts fre;
    for (std::size_t i = 0; i < 3; ++i) {
        spa[i] = spatial_branch(inputs[i], block.spa1, block.spa2);
        fre[i] = frequency_branch(inputs[i], block.fre);
    }
    std::vector<Tensor> gated_spa;
    std::vector<Tensor> gated_fre;
    for (std::size_t i = 0; i < 3; ++i) {
        Tensor gs = spa[i];
        Tensor gf = fre[i];
        if (mode == GateMode::Learned) {
            gf = tri_channel_attention(fre[i], spa, block.att_fre[i]);
            gs = tri_channel_attention(spa[i], fre, block.att_spa[i]);
        }
        const std::size_t up = std::size_t{1} << i;
        gated_spa.push_back(i == 0 ? gs : upsample_nearest(gs, up));
        gated_fre.push_back(i == 0 ? gf : upsample_nearest(gf, up));
    }
    return conv2d(concat(gated_spa), block.fuse_spa) + conv2d(concat(gated_fre), block.fuse_fre);
}

}  // namespace wscod::msfa
