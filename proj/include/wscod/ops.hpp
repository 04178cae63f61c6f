// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "wscod/tensor.hpp"

namespace wscod {

/// Lower bound applied to log arguments and division denominators.
inline constexpr double kNumericEps = 1e-12;

enum class UnaryOp { Neg, Sigmoid, Relu, Log, Exp, Abs, Sqrt, Square };
enum class BinaryOp { Add, Sub, Mul, Div };
enum class ReduceOp { Sum, Mean };

// Elementwise. Binary ops take equal shapes, or broadcast an operand that
// holds a single value. Log and Div clamp as described at kNumericEps.
Tensor elementwise(UnaryOp op, const Tensor& a);
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(BinaryOp op, const Tensor& a, double b);
Tensor pow(const Tensor& a, double exponent);

inline Tensor neg(const Tensor& a) { return elementwise(UnaryOp::Neg, a); }
inline Tensor sigmoid(const Tensor& a) { return elementwise(UnaryOp::Sigmoid, a); }
inline Tensor relu(const Tensor& a) { return elementwise(UnaryOp::Relu, a); }
inline Tensor log(const Tensor& a) { return elementwise(UnaryOp::Log, a); }
inline Tensor exp(const Tensor& a) { return elementwise(UnaryOp::Exp, a); }
inline Tensor abs(const Tensor& a) { return elementwise(UnaryOp::Abs, a); }
inline Tensor sqrt(const Tensor& a) { return elementwise(UnaryOp::Sqrt, a); }
inline Tensor square(const Tensor& a) { return elementwise(UnaryOp::Square, a); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Add, a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Sub, a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Mul, a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Div, a, b); }
inline Tensor operator+(const Tensor& a, double b) { return elementwise(BinaryOp::Add, a, b); }
inline Tensor operator-(const Tensor& a, double b) { return elementwise(BinaryOp::Sub, a, b); }
inline Tensor operator*(const Tensor& a, double b) { return elementwise(BinaryOp::Mul, a, b); }
inline Tensor operator/(const Tensor& a, double b) { return elementwise(BinaryOp::Div, a, b); }
inline Tensor operator+(double a, const Tensor& b) { return elementwise(BinaryOp::Add, b, a); }
inline Tensor operator*(double a, const Tensor& b) { return elementwise(BinaryOp::Mul, b, a); }
inline Tensor operator-(double a, const Tensor& b) { return elementwise(BinaryOp::Add, neg(b), a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Reductions. Reducing every axis yields a scalar of shape {}.
Tensor reduce(ReduceOp op, const Tensor& x, const std::vector<std::size_t>& axes);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// C x H x W -> C, per-channel spatial mean.
Tensor global_avg_pool(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);
/// log(sum(exp(x))) over every element, stabilized by the (constant) maximum.
Tensor logsumexp(const Tensor& x);

// Dense algebra.
/// x: [... x a], weight: [b x a], bias: [b] -> [... x b].
Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias = std::nullopt);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& x);
/// Zero-mean unit-variance normalization of each row (no affine terms).
Tensor layer_norm_rows(const Tensor& x, double eps = 1e-5);

// Layout.
Tensor reshape(const Tensor& x, Shape shape);
/// Concatenation along the leading axis.
Tensor concat(const std::vector<Tensor>& parts);
/// `count` entries of the leading axis starting at `begin`.
Tensor slice(const Tensor& x, std::size_t begin, std::size_t count);

// Spatial ops on C x H x W maps.
/// Stride-1 convolution with odd k and zero padding (k-1)/2.
/// input: [Cin x H x W], kernel: [Cout x Cin x k x k], bias: [Cout].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias = std::nullopt);
Tensor avg_pool2d(const Tensor& x, std::size_t factor);
Tensor upsample_nearest(const Tensor& x, std::size_t factor);
/// [C f^2 x H x W] -> [C x Hf x Wf]; channel c f^2 + dy f + dx fills offset (dy, dx).
Tensor depth_to_space(const Tensor& x, std::size_t factor);
/// Inverse of depth_to_space.
Tensor space_to_depth(const Tensor& x, std::size_t factor);
/// y[c,h,w] = x[c,h,w] * gate[c]
Tensor scale_channels(const Tensor& x, const Tensor& gate);
/// y[c,h,w] = x[c,h,w] * map[h,w]
Tensor mul_spatial(const Tensor& x, const Tensor& map);

struct ComplexTensor {
    Tensor real;
    Tensor imag;

    [[nodiscard]] const Shape& shape() const { return real.shape(); }
};

/// Per-channel 2-D DFT of a real or complex C x H x W map.
ComplexTensor fft2(const Tensor& x);
ComplexTensor fft2(const ComplexTensor& x);
/// Inverse of fft2, including the 1/(H*W) factor.
ComplexTensor ifft2(const ComplexTensor& x);

}  // namespace wscod
