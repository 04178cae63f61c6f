// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/fora.hpp"

#include <cmath>

namespace wscod::fora {
namespace {

double encoder_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

void check_square_kernel(const Tensor& k, std::size_t rank, std::size_t size, const char* what) {
    if (k.shape() != Shape{rank, rank, size, size}) {
        throw ShapeError(std::string(what) + " must be " + shape_str(Shape{rank, rank, size, size}) + ", got " +
                         shape_str(k.shape()));
    }
}

}  // namespace

LowRankAdapter::LowRankAdapter(Tensor base, Tensor encoder, Tensor decoder, GridDims grid)
    : base_(std::move(base)), encoder_(std::move(encoder)), decoder_(std::move(decoder)), grid_(grid) {
    if (base_.rank() != 2 || encoder_.rank() != 2 || decoder_.rank() != 2) {
        throw ShapeError("adapter weights must be matrices");
    }
    const std::size_t b = base_.dim(0);
    const std::size_t a = base_.dim(1);
    const std::size_t r = encoder_.dim(0);
    if (encoder_.dim(1) != a || decoder_.shape() != Shape{b, r}) {
        throw ShapeError("adapter shapes disagree: base " + shape_str(base_.shape()) + ", encoder " +
                         shape_str(encoder_.shape()) + ", decoder " + shape_str(decoder_.shape()));
    }
    if (r < 1 || 2 * r > std::min(a, b)) {
        throw std::invalid_argument("adapter rank " + std::to_string(r) + " must lie in [1, min(a, b)/2]");
    }
}

void SpatialEnhancer::validate(std::size_t rank) const {
    check_square_kernel(k1, rank, 1, "1x1 enhancer kernel");
    check_square_kernel(k3, rank, 3, "3x3 enhancer kernel");
    check_square_kernel(k5, rank, 5, "5x5 enhancer kernel");
}

void FrequencyModulator::validate(std::size_t rank) const { check_square_kernel(kernel, rank, 3, "modulator kernel"); }

Tensor tokens_to_grid(const Tensor& tokens, GridDims grid) {
    if (tokens.rank() != 2 || tokens.dim(0) != grid.tokens()) {
        throw ShapeError("token matrix " + shape_str(tokens.shape()) + " does not cover a " +
                         std::to_string(grid.height) + "x" + std::to_string(grid.width) + " grid");
    }
    return reshape(transpose(tokens), Shape{tokens.dim(1), grid.height, grid.width});
}

Tensor grid_to_tokens(const Tensor& map) {
    if (map.rank() != 3) {
        throw ShapeError("grid_to_tokens expects C x H x W, got " + shape_str(map.shape()));
    }
    return transpose(reshape(map, Shape{map.dim(0), map.dim(1) * map.dim(2)}));
}

Tensor lora_forward(const LowRankAdapter& adapter, const Tensor& x) {
    if (x.rank() != 2 || x.dim(0) != adapter.grid().tokens()) {
        throw ShapeError("adapter input " + shape_str(x.shape()) + " must hold " +
                         std::to_string(adapter.grid().tokens()) + " tokens");
    }
    const Tensor base_out = linear(x, adapter.base().detach());
    return base_out + linear(linear(x, adapter.encoder()), adapter.decoder());
}

Tensor spatial_enhance(const SpatialEnhancer& enh, const Tensor& f) {
    if (f.rank() != 3) {
        throw ShapeError("spatial_enhance expects r x H x W, got " + shape_str(f.shape()));
    }
    enh.validate(f.dim(0));
    const Tensor multi = conv2d(f, enh.k1) + conv2d(f, enh.k3) + conv2d(f, enh.k5);
    return multi * (1.0 / 3.0) + f;
}

Tensor freq_modulate(const FrequencyModulator& mod, const Tensor& f) {
    if (f.rank() != 3) {
        throw ShapeError("freq_modulate expects r x H x W, got " + shape_str(f.shape()));
    }
    mod.validate(f.dim(0));
    const ComplexTensor spectrum = fft2(f);
    const ComplexTensor filtered{conv2d(spectrum.real, mod.kernel), conv2d(spectrum.imag, mod.kernel)};
    return ifft2(filtered).real;
}

Tensor fora_forward(const LowRankAdapter& adapter, const SpatialEnhancer& enh, const FrequencyModulator& mod,
                    const Tensor& x) {
    if (x.rank() != 2 || x.dim(0) != adapter.grid().tokens()) {
        throw ShapeError("adapter input " + shape_str(x.shape()) + " must hold " +
                         std::to_string(adapter.grid().tokens()) + " tokens");
    }
    const Tensor base_out = linear(x, adapter.base().detach());
    const Tensor encoded = tokens_to_grid(linear(x, adapter.encoder()), adapter.grid());
    const Tensor enriched = freq_modulate(mod, spatial_enhance(enh, encoded));
    return base_out + linear(grid_to_tokens(enriched), adapter.decoder());
}

void add_adapter(ParameterSet& params, const std::string& prefix, Array base, std::size_t rank, Rng& rng) {
    if (base.shape.size() != 2) {
        throw ShapeError("adapter base must be a matrix");
    }
    const std::size_t b = base.shape[0];
    const std::size_t a = base.shape[1];
    params.add(prefix + ".base", std::move(base), false);
    params.add(prefix + ".enc", random_normal(Shape{rank, a}, encoder_std(a), rng));
    params.add(prefix + ".dec", Array(Shape{b, rank}, 0.0));
    params.add(prefix + ".spa1", Array(Shape{rank, rank, 1, 1}, 0.0));
    params.add(prefix + ".spa3", Array(Shape{rank, rank, 3, 3}, 0.0));
    params.add(prefix + ".spa5", Array(Shape{rank, rank, 5, 5}, 0.0));
    params.add(prefix + ".fre", delta_kernel(rank, 3));
}

void reset_adapter(ParameterSet& params, const std::string& prefix, Rng& rng) {
    auto& enc = params.at(prefix + ".enc");
    const std::size_t rank = enc.shape[0];
    enc = random_normal(enc.shape, encoder_std(enc.shape[1]), rng);
    params.at(prefix + ".dec") = Array(params.at(prefix + ".dec").shape, 0.0);
    params.at(prefix + ".spa1") = Array(Shape{rank, rank, 1, 1}, 0.0);
    params.at(prefix + ".spa3") = Array(Shape{rank, rank, 3, 3}, 0.0);
    params.at(prefix + ".spa5") = Array(Shape{rank, rank, 5, 5}, 0.0);
    params.at(prefix + ".fre") = delta_kernel(rank, 3);
}

Tensor apply_adapter(const BoundParameters& params, const std::string& prefix, const Tensor& x, GridDims grid,
                     bool with_stages) {
    const LowRankAdapter adapter(params[prefix + ".base"], params[prefix + ".enc"], params[prefix + ".dec"], grid);
    if (!with_stages) {
        return lora_forward(adapter, x);
    }
    const SpatialEnhancer enh{params[prefix + ".spa1"], params[prefix + ".spa3"], params[prefix + ".spa5"]};
    const FrequencyModulator mod{params[prefix + ".fre"]};
    return fora_forward(adapter, enh, mod, x);
}

}  // namespace wscod::fora
