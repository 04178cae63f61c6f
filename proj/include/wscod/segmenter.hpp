// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "wscod/data.hpp"
#include "wscod/fora.hpp"
#include "wscod/params.hpp"

namespace wscod::seg {

/// Prompt-conditioned segmenter: patch embedding, pre-norm single-head
/// attention blocks with adapters on the query and value projections, and a
/// three-layer conv decoder over the grid plus the rasterized box.
struct SegmenterDims {
    std::size_t image = 64;
    std::size_t patch = 4;
    std::size_t dim = 32;
    std::size_t blocks = 2;
    std::size_t mlp = 64;
    std::size_t rank = 4;
    std::size_t decoder_hidden = 16;

    [[nodiscard]] fora::GridDims grid() const { return {image / patch, image / patch}; }
    void validate() const;
};

/// Random base weights with identity-configured adapters.
ParameterSet init_segmenter(const SegmenterDims& dims, Rng& rng);
/// Re-draws every adapter's trainable part with the identity-preserving init.
void reset_adapters(ParameterSet& params, const SegmenterDims& dims, Rng& rng);
/// Adapters and decoder trainable, the rest frozen.
void mark_adaptation_trainable(ParameterSet& params);
/// Everything but the adapters trainable.
void mark_pretraining_trainable(ParameterSet& params);
/// True for names that belong to an adapter's trainable part.
bool is_adapter_parameter(const std::string& name);

struct MaskBundle {
    Tensor logits;  ///< N_p x H x W
    Tensor probs;   ///< sigmoid(logits)
    Array binary;   ///< probs > 0.5

    [[nodiscard]] std::size_t prompts() const { return logits.dim(0); }
};

/// D x Hg x Wg encoder grid of a 3 x H x W image. `fora_stages` = false runs
/// the adapters as plain low-rank updates.
Tensor encode(const BoundParameters& params, const SegmenterDims& dims, const Tensor& image, bool fora_stages);

/// One logit map per box, stacked to N_p x H x W. Throws on an empty prompt list.
Tensor decode(const BoundParameters& params, const SegmenterDims& dims, const Tensor& features,
              const std::vector<data::Box>& boxes);

MaskBundle bundle(const Tensor& logits);

/// encode + decode + bundle.
MaskBundle predict_masks(const BoundParameters& params, const SegmenterDims& dims, const Tensor& image,
                         const std::vector<data::Box>& boxes, bool fora_stages);

}  // namespace wscod::seg
