// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace wscod {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << ']';
    return out.str();
}

Array::Array(Shape s, double fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

Array::Array(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("array of shape " + shape_str(shape) + " given " + std::to_string(data.size()) + " values");
    }
}

Tensor::Tensor() : value_(std::make_shared<const Array>(Shape{}, 0.0)) {}

Tensor::Tensor(Array value) : value_(std::make_shared<const Array>(std::move(value))) {}

Tensor Tensor::scalar(double value) { return Tensor(Array(Shape{}, value)); }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    }
    return shape()[axis];
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return value_->data[0];
}

Tensor Tensor::detach() const {
    Tensor t;
    t.value_ = value_;
    return t;
}

bool GradChannel::has(const Tensor& t) const {
    if (t.tape() != tape_ || t.node() < 0) {
        return false;
    }
    return !grads_[static_cast<std::size_t>(t.node())].empty();
}

Array GradChannel::grad(const Tensor& t) const {
    if (!has(t)) {
        return Array(t.shape(), 0.0);
    }
    return Array(t.shape(), grads_[static_cast<std::size_t>(t.node())]);
}

std::span<const double> GradChannel::view(const Tensor& t) const {
    if (!has(t)) {
        return {};
    }
    return grads_[static_cast<std::size_t>(t.node())];
}

std::span<double> GradChannel::slot(const Tensor& t) {
    if (t.tape() != tape_ || t.node() < 0) {
        throw std::logic_error("gradient slot requested for a tensor that is not on this tape");
    }
    auto& g = grads_[static_cast<std::size_t>(t.node())];
    if (g.empty()) {
        g.assign(t.numel(), 0.0);
    }
    return g;
}

void GradChannel::accumulate(const Tensor& t, std::span<const double> g) {
    if (!t.requires_grad()) {
        return;
    }
    if (g.size() != t.numel()) {
        throw ShapeError("gradient of size " + std::to_string(g.size()) + " for tensor " + shape_str(t.shape()));
    }
    auto dst = slot(t);
    for (std::size_t i = 0; i < g.size(); ++i) {
        dst[i] += g[i];
    }
}

Tensor Tape::push(std::shared_ptr<const Array> value, Adjoint adjoint) {
    Tensor t;
    t.value_ = std::move(value);
    t.tape_ = this;
    t.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{t.value_->shape, std::move(adjoint)});
    return t;
}

Tensor Tape::leaf(Array value) { return push(std::make_shared<const Array>(std::move(value)), nullptr); }

Tensor Tape::watch(const Tensor& t) { return push(t.storage(), nullptr); }

Tensor Tape::apply(std::shared_ptr<const Array> value, const std::vector<Tensor>& inputs, Adjoint adjoint) {
    Tape* tape = nullptr;
    for (const auto& in : inputs) {
        if (!in.requires_grad()) {
            continue;
        }
        if (tape != nullptr && in.tape() != tape) {
            throw std::logic_error("operation mixes tensors from different tapes");
        }
        tape = in.tape();
    }
    if (tape == nullptr) {
        Tensor t;
        t.value_ = std::move(value);
        return t;
    }
    return tape->push(std::move(value), std::move(adjoint));
}

GradChannel Tape::backward(const Tensor& root) {
    if (root.tape() != this || root.node() < 0) {
        throw std::logic_error("backward root is not recorded on this tape");
    }
    if (root.numel() != 1) {
        throw ShapeError("backward root must be a scalar, got " + shape_str(root.shape()));
    }
    if (!swept_roots_.insert(root.node()).second) {
        throw std::logic_error("backward already run for this root; call clear_gradients() first");
    }
    GradChannel channel;
    channel.tape_ = this;
    channel.grads_.resize(nodes_.size());
    channel.grads_[static_cast<std::size_t>(root.node())].assign(1, 1.0);
    for (int id = root.node(); id >= 0; --id) {
        auto& g = channel.grads_[static_cast<std::size_t>(id)];
        const auto& node = nodes_[static_cast<std::size_t>(id)];
        if (g.empty() || !node.adjoint) {
            continue;
        }
        node.adjoint(g, channel);
    }
    return channel;
}

}  // namespace wscod
