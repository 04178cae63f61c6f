// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/fft.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace wscod::dft {
namespace {

using cd = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// twiddle[k] = exp(sign * 2*pi*i*k/n)
std::vector<cd> twiddles(std::size_t n, double sign) {
    std::vector<cd> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        w[k] = cd(std::cos(angle), std::sin(angle));
    }
    return w;
}

void radix2(std::vector<cd>& a, const std::vector<cd>& w) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(a[i], a[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cd u = a[i + k];
                const cd v = a[i + k + len / 2] * w[k * stride];
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

void direct(std::vector<cd>& a, std::vector<cd>& scratch, const std::vector<cd>& w) {
    const std::size_t n = a.size();
    scratch.assign(n, cd(0.0, 0.0));
    for (std::size_t k = 0; k < n; ++k) {
        cd acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            acc += a[j] * w[(k * j) % n];
        }
        scratch[k] = acc;
    }
    a.swap(scratch);
}

class AxisTransform {
public:
    AxisTransform(std::size_t n, double sign) : n_(n), w_(twiddles(n, sign)), buf_(n) {}

    // Transforms n elements starting at `offset` with the given stride.
    void run(std::span<double> re, std::span<double> im, std::size_t offset, std::size_t stride) {
        for (std::size_t i = 0; i < n_; ++i) {
            buf_[i] = cd(re[offset + i * stride], im[offset + i * stride]);
        }
        if (is_pow2(n_)) {
            radix2(buf_, w_);
        } else {
            direct(buf_, scratch_, w_);
        }
        for (std::size_t i = 0; i < n_; ++i) {
            re[offset + i * stride] = buf_[i].real();
            im[offset + i * stride] = buf_[i].imag();
        }
    }

private:
    std::size_t n_;
    std::vector<cd> w_;
    std::vector<cd> buf_;
    std::vector<cd> scratch_;
};

}  // namespace

void transform(std::span<double> re, std::span<double> im, std::size_t planes, std::size_t height, std::size_t width,
               Direction direction) {
    if (height == 0 || width == 0) {
        throw std::invalid_argument("dft::transform requires non-empty planes");
    }
    const std::size_t plane = height * width;
    if (re.size() != planes * plane || im.size() != planes * plane) {
        throw std::invalid_argument("dft::transform buffer size does not match planes x height x width");
    }
    const double sign = direction == Direction::Forward ? -1.0 : 1.0;
    AxisTransform rows(width, sign);
    AxisTransform cols(height, sign);
    for (std::size_t p = 0; p < planes; ++p) {
        const std::size_t base = p * plane;
        for (std::size_t y = 0; y < height; ++y) {
            rows.run(re, im, base + y * width, 1);
        }
        for (std::size_t x = 0; x < width; ++x) {
            cols.run(re, im, base + x, width);
        }
    }
}

}  // namespace wscod::dft
