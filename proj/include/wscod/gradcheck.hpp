// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wscod/tensor.hpp"

namespace wscod::gradcheck {

/// Builds a scalar from tape leaves. Called once on a recording tape and
/// twice per input entry on scratch tapes for the finite differences.
using ScalarFunction = std::function<Tensor(const std::vector<Tensor>& inputs)>;

/// |a - b| / max(1, |a|, |b|)
double relative_error(double analytic, double numeric);

struct Result {
    double max_rel_error = 0.0;
    std::size_t entries = 0;
    std::size_t worst_input = 0;
    std::size_t worst_entry = 0;
};

/// Compares tape gradients against central differences with step `h` for
/// every entry of every input.
Result check(const ScalarFunction& f, const std::vector<Array>& inputs, double h = 1e-5);

}  // namespace wscod::gradcheck
