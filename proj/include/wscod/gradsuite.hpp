// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wscod/gradcheck.hpp"
#include "wscod/params.hpp"

namespace wscod::gradcheck {

/// Inputs to differentiate with respect to, and a scalar function of them.
/// Fixed data such as targets is captured by `f`.
struct Instance {
    std::vector<Array> inputs;
    ScalarFunction f;
};

/// A differentiable function family; `make` draws one random configuration.
struct Case {
    std::string name;
    std::string group;  ///< primitive, fora, msfa, loss or gcl
    std::function<Instance(Rng&)> make;
};

/// Every primitive, the FoRA and MSFA forwards and every loss.
std::vector<Case> standard_cases();

/// A doubling op whose adjoint drops the factor two; the suite must flag it.
Case corrupted_case();

struct CaseResult {
    std::string name;
    std::string group;
    std::size_t configs = 0;
    double max_rel_error = 0.0;
};

struct SuiteResult {
    std::vector<CaseResult> cases;
    std::size_t configs = 0;
    double max_rel_error = 0.0;
};

/// Runs `trials` random configurations of every case.
SuiteResult run_suite(const std::vector<Case>& cases, std::uint64_t seed, std::size_t trials, double h = 1e-5);

}  // namespace wscod::gradcheck
