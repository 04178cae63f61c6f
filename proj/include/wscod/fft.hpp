// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

namespace wscod::dft {

enum class Direction { Forward, Inverse };

/// Unnormalized 2-D discrete Fourier transform, in place, applied to each of
/// `planes` consecutive H x W planes. Forward uses exp(-2*pi*i*k*n/N),
/// Inverse uses exp(+2*pi*i*k*n/N); neither scales by 1/(H*W).
///
/// Power-of-two axis lengths take an iterative radix-2 path; any other
/// length falls back to the direct O(n^2) sum.
void transform(std::span<double> re, std::span<double> im, std::size_t planes, std::size_t height, std::size_t width,
               Direction direction);

}  // namespace wscod::dft
