// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/gcl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wscod::gcl {

Array grad_cam_from_gradient(const Array& features, const Array& gradient) {
    if (features.shape.size() != 3 || features.shape != gradient.shape) {
        throw ShapeError("grad_cam needs matching D x H x W feature and gradient maps, got " +
                         shape_str(features.shape) + " and " + shape_str(gradient.shape));
    }
    const std::size_t d = features.shape[0];
    const std::size_t hw = features.shape[1] * features.shape[2];
    Array cam(Shape{features.shape[1], features.shape[2]}, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        double w = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            w += gradient[c * hw + i];
        }
        w /= static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) {
            cam[i] += w * features[c * hw + i];
        }
    }
    for (auto& v : cam.data) {
        v = std::max(v, 0.0);
    }
    const auto [lo, hi] = std::minmax_element(cam.data.begin(), cam.data.end());
    const double min = *lo;
    const double range = *hi - *lo;
    if (range < kNumericEps) {
        std::fill(cam.data.begin(), cam.data.end(), 1.0);
        return cam;
    }
    for (auto& v : cam.data) {
        v = std::clamp((v - min) / (range + kNumericEps), 0.0, 1.0);
    }
    return cam;
}

Array grad_cam(const Tensor& features, const Tensor& score) {
    if (score.tape() == nullptr) {
        throw std::logic_error("grad_cam: score is not on a tape");
    }
    if (features.tape() != score.tape()) {
        throw std::logic_error("grad_cam: features and score live on different tapes");
    }
    const GradChannel channel = score.tape()->backward(score);
    return grad_cam_from_gradient(features.array(), channel.grad(features));
}

Array weighted_bg_mask(const Array& background, const Array& cam) {
    if (background.shape != cam.shape) {
        throw ShapeError("weighted_bg_mask: " + shape_str(background.shape) + " vs " + shape_str(cam.shape));
    }
    Array out(background.shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = background[i] * cam[i];
    }
    return out;
}

Array downsample_majority(const Array& mask, std::size_t factor) {
    if (mask.shape.size() != 2 || factor == 0 || mask.shape[0] % factor != 0 || mask.shape[1] % factor != 0) {
        throw ShapeError("downsample_majority: factor " + std::to_string(factor) + " does not divide " +
                         shape_str(mask.shape));
    }
    const std::size_t h = mask.shape[0] / factor;
    const std::size_t w = mask.shape[1] / factor;
    Array out(Shape{h, w}, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t count = 0;
            for (std::size_t dy = 0; dy < factor; ++dy) {
                for (std::size_t dx = 0; dx < factor; ++dx) {
                    count += mask[(y * factor + dy) * mask.shape[1] + x * factor + dx] > 0.5 ? 1 : 0;
                }
            }
            out[y * w + x] = 2 * count >= factor * factor ? 1.0 : 0.0;
        }
    }
    return out;
}

Tensor l2_normalize_channels(const Tensor& features) {
    if (features.rank() != 3) {
        throw ShapeError("l2_normalize_channels expects D x H x W, got " + shape_str(features.shape()));
    }
    const Tensor norm = sqrt(reduce(ReduceOp::Sum, square(features), {0}) + kNumericEps);
    return mul_spatial(features, pow(norm, -1.0));
}

namespace {

std::optional<Tensor> pool(const Tensor& features, const Array& weights) {
    double total = 0.0;
    for (double v : weights.data) {
        total += v;
    }
    if (total <= 0.0) {
        return std::nullopt;
    }
    const Tensor weighted = mul_spatial(features, Tensor(weights));
    return reduce(ReduceOp::Sum, weighted, {1, 2}) * (1.0 / total);
}

Tensor as_vector(const Tensor& scalar) { return reshape(scalar, Shape{1}); }

}  // namespace

PrototypeSet prototype_pool(const Tensor& features, const std::vector<Array>& foreground_masks,
                            const Array& background_weights) {
    if (features.rank() != 3) {
        throw ShapeError("prototype_pool expects D x H x W features, got " + shape_str(features.shape()));
    }
    const Shape grid{features.dim(1), features.dim(2)};
    if (background_weights.shape != grid) {
        throw ShapeError("background weights " + shape_str(background_weights.shape) + " do not match grid " +
                         shape_str(grid));
    }
    PrototypeSet set;
    set.background = pool(features, background_weights);
    for (std::size_t j = 0; j < foreground_masks.size(); ++j) {
        if (foreground_masks[j].shape != grid) {
            throw ShapeError("foreground mask " + shape_str(foreground_masks[j].shape) + " does not match grid " +
                             shape_str(grid));
        }
        auto proto = pool(features, foreground_masks[j]);
        if (!proto) {
            set.skipped.push_back(j);
        }
        set.foreground.push_back(std::move(proto));
    }
    return set;
}

ContrastiveResult gcl_loss(const PrototypeSet& student, const PrototypeSet& teacher, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("gcl temperature must be positive");
    }
    if (student.foreground.size() != teacher.foreground.size()) {
        throw ShapeError("student and teacher hold different instance counts");
    }
    std::vector<Tensor> s;
    std::vector<Tensor> t;
    for (std::size_t j = 0; j < student.foreground.size(); ++j) {
        if (student.foreground[j] && teacher.foreground[j]) {
            s.push_back(*student.foreground[j]);
            t.push_back(teacher.foreground[j]->detach());
        }
    }
    ContrastiveResult result{Tensor::scalar(0.0), s.size(), {}};
    if (s.empty()) {
        result.warning = "no foreground instance pooled on both branches";
        return result;
    }
    std::optional<Tensor> bg;
    if (teacher.background) {
        bg = teacher.background->detach();
    }
    const double inv_tau = 1.0 / tau;
    std::vector<Tensor> positives;
    std::vector<Tensor> negatives;
    for (std::size_t j = 0; j < s.size(); ++j) {
        positives.push_back(as_vector(dot(s[j], t[j]) * inv_tau));
        if (bg) {
            negatives.push_back(as_vector(dot(s[j], *bg) * inv_tau));
        }
        for (std::size_t k = 0; k < t.size(); ++k) {
            if (k != j) {
                negatives.push_back(as_vector(dot(s[j], t[k]) * inv_tau));
            }
        }
    }
    if (negatives.empty()) {
        result.warning = "contrastive denominator is empty (one instance, no background)";
        return result;
    }
    result.loss = logsumexp(concat(negatives)) - logsumexp(concat(positives));
    return result;
}

Tensor total_stage1_loss(const Stage1Terms& terms, const Stage1Weights& weights) {
    const std::pair<const char*, const Tensor*> named[] = {
        {"dice", &terms.dice}, {"anchor", &terms.anchor}, {"gcl", &terms.gcl}, {"focal", &terms.focal}};
    for (const auto& [name, t] : named) {
        if (t->numel() != 1) {
            throw ShapeError(std::string("loss term '") + name + "' is not a scalar");
        }
        if (!std::isfinite(t->item())) {
            throw std::domain_error(std::string("loss term '") + name + "' is not finite");
        }
    }
    Tensor total = terms.dice;
    if (weights.anchor != 0.0) {
        total = total + terms.anchor * weights.anchor;
    }
    if (weights.gcl != 0.0) {
        total = total + terms.gcl * weights.gcl;
    }
    if (weights.focal != 0.0) {
        total = total + terms.focal * weights.focal;
    }
    return total;
}

}  // namespace wscod::gcl
