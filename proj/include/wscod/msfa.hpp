// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>

#include "wscod/ops.hpp"
#include "wscod/params.hpp"

namespace wscod::msfa {

/// Three views of one feature map; each scale halves the previous one.
struct MultiScaleFeatures {
    Tensor small;
    Tensor medium;
    Tensor large;

    void validate() const;
};

/// Builds the tri-scale input for one encoder stage: f, pool2(f), pool4(f).
MultiScaleFeatures from_stage(const Tensor& f);

struct AttentionWeights {
    Tensor w1;  ///< C/rho x C
    Tensor w2;  ///< C x C/rho
};

/// Per-scale contexts and weights for Tri-Channel Attention.
using Contexts = std::array<Tensor, 3>;
using ScaleWeights = std::array<AttentionWeights, 3>;

/// Learned gates, or gates forced to 1 (a test hook for the identity chain).
enum class GateMode { Learned, Unit };

/// Two stacked same-padded 3x3 convolutions.
Tensor spatial_branch(const Tensor& f, const Tensor& k1, const Tensor& k2);

/// FFT, stack real over imaginary into 2C planes, 1x1 conv (2C -> 2C), split,
/// IFFT, real part.
Tensor frequency_branch(const Tensor& f, const Tensor& kernel);

/// (1/3) sum_j sigmoid(W2_j ReLU(W1_j GAP(y_j))), a C-vector in (0, 1).
Tensor channel_gate(const Contexts& contexts, const ScaleWeights& weights);

/// x scaled per channel by channel_gate(contexts, weights).
Tensor tri_channel_attention(const Tensor& x, const Contexts& contexts, const ScaleWeights& weights);

/// Parameters of one block, as tensors bound for a forward pass.
struct MsfaBlock {
    Tensor spa1;
    Tensor spa2;
    Tensor fre;
    /// att_fre[i] gates frequency feature i using spatial contexts; att_spa[i] the reverse.
    std::array<ScaleWeights, 3> att_fre;
    std::array<ScaleWeights, 3> att_spa;
    Tensor fuse_spa;  ///< C x 3C x 1 x 1
    Tensor fuse_fre;  ///< C x 3C x 1 x 1

    [[nodiscard]] std::size_t channels() const { return spa1.dim(0); }
    static MsfaBlock bind(const BoundParameters& params, const std::string& prefix);
};

/// Adds a block's parameters under `prefix`. Names:
///   spa1 spa2 fre fuse.spa fuse.fre att.fre.IJ.w1 att.fre.IJ.w2 att.spa.IJ.w1 att.spa.IJ.w2
void add_block(ParameterSet& params, const std::string& prefix, std::size_t channels, std::size_t reduction, Rng& rng);

/// Spatial and frequency features at all scales, cross-gated, upsampled to the
/// small grid and fused by the two 1x1 projections.
Tensor msfa_forward(const MsfaBlock& block, const MultiScaleFeatures& feats, GateMode mode = GateMode::Learned);

}  // namespace wscod::msfa
