// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "wscod/ops.hpp"
#include "wscod/params.hpp"

namespace wscod::fora {

struct GridDims {
    std::size_t height = 0;
    std::size_t width = 0;

    [[nodiscard]] std::size_t tokens() const { return height * width; }
};

/// Frozen base projection W0 (b x a) plus the trainable rank-r pair
/// W_e (r x a) and W_d (b x r). Tokens are laid out row-major on the grid.
class LowRankAdapter {
public:
    LowRankAdapter(Tensor base, Tensor encoder, Tensor decoder, GridDims grid);

    [[nodiscard]] const Tensor& base() const { return base_; }
    [[nodiscard]] const Tensor& encoder() const { return encoder_; }
    [[nodiscard]] const Tensor& decoder() const { return decoder_; }
    [[nodiscard]] std::size_t rank() const { return encoder_.dim(0); }
    [[nodiscard]] std::size_t in_features() const { return base_.dim(1); }
    [[nodiscard]] std::size_t out_features() const { return base_.dim(0); }
    [[nodiscard]] GridDims grid() const { return grid_; }

private:
    Tensor base_;
    Tensor encoder_;
    Tensor decoder_;
    GridDims grid_;
};

/// Multi-kernel spatial stage: 1x1, 3x3 and 5x5 convolutions, r -> r, no bias.
struct SpatialEnhancer {
    Tensor k1;
    Tensor k3;
    Tensor k5;

    void validate(std::size_t rank) const;
};

/// One real 3x3 kernel (r -> r) applied to both planes of the spectrum.
struct FrequencyModulator {
    Tensor kernel;

    void validate(std::size_t rank) const;
};

/// W0 x + W_d W_e x, row-wise over a [T x a] token matrix.
Tensor lora_forward(const LowRankAdapter& adapter, const Tensor& x);

/// (k1(F) + k3(F) + k5(F)) / 3 + F on an r x Hg x Wg map.
Tensor spatial_enhance(const SpatialEnhancer& enh, const Tensor& f);

/// Re(IFFT(K * FFT(F))), K convolving the real and imaginary planes alike.
Tensor freq_modulate(const FrequencyModulator& mod, const Tensor& f);

/// W0 x + W_d flatten(S_fre(S_spa(grid(W_e x)))).
Tensor fora_forward(const LowRankAdapter& adapter, const SpatialEnhancer& enh, const FrequencyModulator& mod,
                    const Tensor& x);

/// [T x r] tokens -> [r x Hg x Wg] map, and back.
Tensor tokens_to_grid(const Tensor& tokens, GridDims grid);
Tensor grid_to_tokens(const Tensor& map);

// Parameter-set plumbing. An adapter stored under `prefix` owns
//   prefix.base  prefix.enc  prefix.dec  prefix.spa1  prefix.spa3  prefix.spa5  prefix.fre

/// Adds an adapter around `base`, initialized so the adapted projection equals
/// the base: W_e ~ N(0, 0.02^2), W_d = 0, enhancer kernels 0, modulator delta.
void add_adapter(ParameterSet& params, const std::string& prefix, Array base, std::size_t rank, Rng& rng);
/// Re-draws the trainable parts of an existing adapter with the same init.
void reset_adapter(ParameterSet& params, const std::string& prefix, Rng& rng);

/// Applies the adapter under `prefix`; `with_stages` = false gives plain LoRA.
Tensor apply_adapter(const BoundParameters& params, const std::string& prefix, const Tensor& x, GridDims grid,
                     bool with_stages);

}  // namespace wscod::fora
