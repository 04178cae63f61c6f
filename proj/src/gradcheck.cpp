// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wscod::gradcheck {
namespace {

double evaluate(const ScalarFunction& f, const std::vector<Array>& inputs) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& a : inputs) {
        leaves.push_back(tape.leaf(a));
    }
    return f(leaves).item();
}

}  // namespace

double relative_error(double analytic, double numeric) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / scale;
}

Result check(const ScalarFunction& f, const std::vector<Array>& inputs, double h) {
    Tape tape;
    std::vector<Tensor> leaves;
    for (const auto& a : inputs) {
        leaves.push_back(tape.leaf(a));
    }
    const Tensor root = f(leaves);
    if (root.numel() != 1) {
        throw ShapeError("gradient check needs a scalar function, got " + shape_str(root.shape()));
    }
    const GradChannel channel = tape.backward(root);

    Result result;
    std::vector<Array> probe = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Array analytic = channel.grad(leaves[i]);
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double x0 = inputs[i][j];
            probe[i][j] = x0 + h;
            const double up = evaluate(f, probe);
            probe[i][j] = x0 - h;
            const double down = evaluate(f, probe);
            probe[i][j] = x0;
            const double numeric = (up - down) / (2.0 * h);
            if (!std::isfinite(numeric) || !std::isfinite(analytic[j])) {
                throw std::runtime_error("non-finite gradient at input " + std::to_string(i) + " entry " +
                                         std::to_string(j));
            }
            const double err = relative_error(analytic[j], numeric);
            ++result.entries;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_input = i;
                result.worst_entry = j;
            }
        }
    }
    return result;
}

}  // namespace wscod::gradcheck
