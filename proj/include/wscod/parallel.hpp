// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace wscod {

/// Runs body(i) for i in [0, n) on up to `workers` threads. Indices are handed
/// out dynamically; the first exception thrown is rethrown after all threads join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace wscod
