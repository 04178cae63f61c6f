// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wscod/ops.hpp"

namespace wscod::losses {

// Masks are N_p x H x W. Probabilities are tensors that may carry gradient;
// binary targets are used as constants.

/// -(1/HW) sum_j sum_hw [t (1-m)^g log m + (1-t) m^g log(1-m)], summed over
/// the prompt axis and divided by H*W only.
Tensor focal(const Tensor& student_prob, const Array& teacher_binary, double gamma);

/// sum_j [1 - (2 sum m t + eps) / (sum m + sum t + eps)]
Tensor dice(const Tensor& prob, const Array& target_binary, double eps);

/// lambda_stu * dice(m_s, a) + lambda_tea * dice(m_t, a)
Tensor anchor(const Tensor& student_prob, const Tensor& teacher_prob, const Array& anchor_binary, double lambda_student,
              double lambda_teacher, double eps);

/// Pixel-mean binary cross-entropy with clamped logs.
Tensor bce(const Tensor& prob, const Array& target);

/// Mean of 1 - (2p - 1)^2. Throws std::domain_error when p leaves [0, 1].
Tensor uncertainty(const Tensor& prob);

/// cos(pi t / 2), evaluated as sin(pi/2 (1 - t)) so both endpoints are exact.
double uncertainty_weight(double t);

/// bce + uncertainty_weight(t) * uncertainty. Throws std::domain_error when t leaves [0, 1].
Tensor stage2(const Tensor& prob, const Array& pseudo_label, double t);

/// 1 where m > 0.5, else 0.
Array binarize(const Tensor& prob);

}  // namespace wscod::losses
