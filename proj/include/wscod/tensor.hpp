// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace wscod {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Plain row-major block of doubles. Channels-first (C x H x W) for images
/// and feature maps. A shape of {} denotes a scalar holding one value.
struct Array {
    Shape shape;
    std::vector<double> data;

    Array() = default;
    explicit Array(Shape s, double fill = 0.0);
    Array(Shape s, std::vector<double> values);

    [[nodiscard]] std::size_t size() const { return data.size(); }
    [[nodiscard]] double& operator[](std::size_t i) { return data[i]; }
    [[nodiscard]] double operator[](std::size_t i) const { return data[i]; }

    bool operator==(const Array& other) const = default;
};

class Tape;
class GradChannel;

/// Handle to an immutable value, optionally bound to a node on a Tape.
/// Tensors without a node are constants: they never receive gradient and
/// ops whose inputs are all constants are not recorded.
class Tensor {
public:
    Tensor();
    explicit Tensor(Array value);
    static Tensor scalar(double value);

    [[nodiscard]] const Shape& shape() const { return value_->shape; }
    [[nodiscard]] std::size_t numel() const { return value_->data.size(); }
    [[nodiscard]] std::size_t rank() const { return value_->shape.size(); }
    [[nodiscard]] std::size_t dim(std::size_t axis) const;
    [[nodiscard]] std::span<const double> values() const& { return value_->data; }
    [[nodiscard]] const Array& array() const& { return *value_; }
    // A span into a temporary would dangle, so rvalues hand out a copy.
    std::span<const double> values() const&& = delete;
    [[nodiscard]] Array array() const&& { return *value_; }
    [[nodiscard]] std::shared_ptr<const Array> storage() const { return value_; }
    [[nodiscard]] double item() const;

    [[nodiscard]] bool requires_grad() const { return node_ >= 0; }
    [[nodiscard]] int node() const { return node_; }
    [[nodiscard]] Tape* tape() const { return tape_; }

    /// Constant view of the same values; cuts the gradient path.
    [[nodiscard]] Tensor detach() const;

private:
    friend class Tape;
    std::shared_ptr<const Array> value_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

/// Gradients produced by one backward call. Channels are independent, so an
/// auxiliary backward (e.g. for an activation map) never touches the
/// gradients used by the optimizer.
class GradChannel {
public:
    [[nodiscard]] bool has(const Tensor& t) const;
    /// Gradient of the root w.r.t. `t`; zeros when nothing flowed into `t`.
    [[nodiscard]] Array grad(const Tensor& t) const;
    [[nodiscard]] std::span<const double> view(const Tensor& t) const;

    /// Adds `g` into the gradient slot of `t`; a no-op for constants.
    void accumulate(const Tensor& t, std::span<const double> g);
    /// Writable slot for `t` (allocated zeroed on first use). `t` must be on the tape.
    std::span<double> slot(const Tensor& t);

private:
    friend class Tape;
    const Tape* tape_ = nullptr;
    std::vector<std::vector<double>> grads_;
};

using Adjoint = std::function<void(std::span<const double> out_grad, GradChannel& channel)>;

/// Ordered record of differentiable operations. Node ids increase in
/// recording order, which is a valid topological order.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// New requires-grad leaf holding `value`.
    Tensor leaf(Array value);
    /// New leaf sharing the values of `t`, cut from whatever produced `t`.
    Tensor watch(const Tensor& t);

    /// Records `value` as produced from `inputs` with the given adjoint. If no
    /// input is on a tape the result is a constant and nothing is recorded.
    static Tensor apply(std::shared_ptr<const Array> value, const std::vector<Tensor>& inputs, Adjoint adjoint);

    /// Reverse sweep from a scalar root. Each root may be swept once until
    /// clear_gradients() is called; a repeated sweep throws std::logic_error.
    GradChannel backward(const Tensor& root);
    void clear_gradients() { swept_roots_.clear(); }

    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] const Shape& node_shape(int id) const { return nodes_.at(static_cast<std::size_t>(id)).shape; }

private:
    struct Node {
        Shape shape;
        Adjoint adjoint;
    };

    Tensor push(std::shared_ptr<const Array> value, Adjoint adjoint);

    std::vector<Node> nodes_;
    std::unordered_set<int> swept_roots_;
};

}  // namespace wscod
