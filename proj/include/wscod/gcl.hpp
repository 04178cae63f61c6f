// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wscod/ops.hpp"

namespace wscod::gcl {

/// Grad-CAM from a feature map and the gradient of a score with respect to it.
/// w_c = spatial mean of the gradient, A = ReLU(sum_c w_c F_c), then min-max
/// normalized into [0, 1]; a map with max - min below kNumericEps is all ones.
Array grad_cam_from_gradient(const Array& features, const Array& gradient);

/// Sweeps `score` on its own gradient channel and applies grad_cam_from_gradient
/// to `features`, which must be a node on the same tape.
Array grad_cam(const Tensor& features, const Tensor& score);

/// background * cam, elementwise.
Array weighted_bg_mask(const Array& background, const Array& cam);

/// Area-majority downsampling of an H x W binary mask by `factor`: a cell is 1
/// when at least half of its pixels are.
Array downsample_majority(const Array& mask, std::size_t factor);

/// Unit-normalizes the D-vector at every location of a D x H x W map.
Tensor l2_normalize_channels(const Tensor& features);

struct PrototypeSet {
    std::optional<Tensor> background;
    /// One slot per instance; empty when that instance's mask had no area.
    std::vector<std::optional<Tensor>> foreground;
    std::vector<std::size_t> skipped;
};

/// Masked average pooling: sum F m / sum m for the background weights and each
/// foreground mask. `features` must already be L2-normalized per location.
PrototypeSet prototype_pool(const Tensor& features, const std::vector<Array>& foreground_masks,
                            const Array& background_weights);

struct ContrastiveResult {
    Tensor loss;
    std::size_t instances = 0;
    std::string warning;  ///< non-empty when the term is inactive
};

/// -log( sum_j exp(s_j.t_j / tau) / sum_j sum_{k != j, k >= 0} exp(s_j.t_k / tau) )
/// with k = 0 the teacher background. Teacher prototypes are detached. Only
/// instances pooled on both sides take part; with none, or with an empty
/// denominator, the loss is 0 and `warning` says why.
ContrastiveResult gcl_loss(const PrototypeSet& student, const PrototypeSet& teacher, double tau);

struct Stage1Terms {
    Tensor dice;
    Tensor anchor;
    Tensor gcl;
    Tensor focal;
};

struct Stage1Weights {
    double anchor = 0.5;
    double gcl = 1.0;
    double focal = 20.0;
};

/// dice + w.anchor * anchor + w.gcl * gcl + w.focal * focal. Throws
/// std::domain_error naming the first non-finite term. A zero weight drops the
/// term from the graph entirely.
Tensor total_stage1_loss(const Stage1Terms& terms, const Stage1Weights& weights);

}  // namespace wscod::gcl
