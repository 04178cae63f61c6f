// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace wscod::losses {
namespace {

void require_same_shape(const Tensor& a, const Array& b, const char* what) {
    if (a.shape() != b.shape) {
        throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape));
    }
}

std::size_t plane_size(const Shape& s) {
    if (s.size() < 2) {
        throw ShapeError("mask tensors need at least H x W axes, got " + shape_str(s));
    }
    return s[s.size() - 1] * s[s.size() - 2];
}

std::vector<std::size_t> spatial_axes(const Shape& s) {
    if (s.size() == 2) {
        return {0, 1};
    }
    if (s.size() == 3) {
        return {1, 2};
    }
    throw ShapeError("masks must be H x W or N x H x W, got " + shape_str(s));
}

}  // namespace

Tensor focal(const Tensor& student_prob, const Array& teacher_binary, double gamma) {
    require_same_shape(student_prob, teacher_binary, "focal");
    const Tensor t(teacher_binary);
    const Tensor& m = student_prob;
    const Tensor pos = t * pow(1.0 - m, gamma) * log(m);
    const Tensor neg = (1.0 - t) * pow(m, gamma) * log(1.0 - m);
    return sum(pos + neg) * (-1.0 / static_cast<double>(plane_size(m.shape())));
}

Tensor dice(const Tensor& prob, const Array& target_binary, double eps) {
    require_same_shape(prob, target_binary, "dice");
    const Tensor t(target_binary);
    const auto axes = spatial_axes(prob.shape());
    const Tensor inter = reduce(ReduceOp::Sum, prob * t, axes);
    const Tensor denom = reduce(ReduceOp::Sum, prob, axes) + reduce(ReduceOp::Sum, t, axes) + eps;
    return sum(1.0 - (inter * 2.0 + eps) / denom);
}

Tensor anchor(const Tensor& student_prob, const Tensor& teacher_prob, const Array& anchor_binary, double lambda_student,
              double lambda_teacher, double eps) {
    return dice(student_prob, anchor_binary, eps) * lambda_student +
           dice(teacher_prob, anchor_binary, eps) * lambda_teacher;
}

Tensor bce(const Tensor& prob, const Array& target) {
    require_same_shape(prob, target, "bce");
    const Tensor t(target);
    return mean(t * log(prob) + (1.0 - t) * log(1.0 - prob)) * -1.0;
}

Tensor uncertainty(const Tensor& prob) {
    for (double p : prob.values()) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::domain_error("uncertainty loss needs probabilities in [0, 1], got " + std::to_string(p));
        }
    }
    return mean(1.0 - square(prob * 2.0 - 1.0));
}

double uncertainty_weight(double t) { return std::sin(std::numbers::pi / 2.0 * (1.0 - t)); }

Tensor stage2(const Tensor& prob, const Array& pseudo_label, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::domain_error("training progress t must lie in [0, 1], got " + std::to_string(t));
    }
    return bce(prob, pseudo_label) + uncertainty(prob) * uncertainty_weight(t);
}

Array binarize(const Tensor& prob) {
    Array out(prob.shape());
    const auto v = prob.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = v[i] > 0.5 ? 1.0 : 0.0;
    }
    return out;
}

}  // namespace wscod::losses
