// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wscod/tensor.hpp"

namespace wscod {

using Rng = std::mt19937_64;

/// Deterministic 64-bit mix of a seed with a stream of indices (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

Array random_normal(Shape shape, double stddev, Rng& rng);
/// Centered delta kernel per channel: [c x c x k x k], tap (i, i, k/2, k/2) = value.
Array delta_kernel(std::size_t channels, std::size_t k, double value = 1.0);
Array identity_matrix(std::size_t n);

/// Named parameter arrays in insertion order, each flagged trainable or frozen.
class ParameterSet {
public:
    struct Entry {
        std::string name;
        Array value;
        bool trainable = true;
    };

    void add(std::string name, Array value, bool trainable = true);
    [[nodiscard]] bool contains(std::string_view name) const;
    [[nodiscard]] const Array& at(std::string_view name) const;
    Array& at(std::string_view name);
    [[nodiscard]] bool trainable(std::string_view name) const;
    void set_trainable(std::string_view name, bool trainable);
    /// Marks every entry whose name starts with `prefix`.
    void set_trainable_prefix(std::string_view prefix, bool trainable);

    [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] std::size_t scalar_count(bool trainable_only = false) const;
    /// True when both sets hold the same names with the same shapes, in order.
    [[nodiscard]] bool same_layout(const ParameterSet& other) const;

    bool operator==(const ParameterSet& other) const;

private:
    const Entry& find(std::string_view name) const;
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class Binding {
    Constant,   ///< every parameter is a constant (inference)
    Trainable,  ///< trainable parameters become tape leaves, frozen ones constants
    All,        ///< every parameter becomes a tape leaf
};

/// Tensor views of a ParameterSet for one forward pass.
class BoundParameters {
public:
    BoundParameters(const ParameterSet& params, Tape* tape, Binding binding);

    [[nodiscard]] const Tensor& operator[](std::string_view name) const;
    [[nodiscard]] bool contains(std::string_view name) const;
    /// (name, tensor) for every parameter that is a tape leaf.
    [[nodiscard]] const std::vector<std::pair<std::string, Tensor>>& leaves() const { return leaves_; }

    /// Gradients of every bound leaf, keyed by parameter name.
    [[nodiscard]] std::map<std::string, Array> gradients(const GradChannel& channel) const;

private:
    std::unordered_map<std::string, Tensor> tensors_;
    std::vector<std::pair<std::string, Tensor>> leaves_;
};

/// SGD with classical momentum and L2 weight decay:
///   g += wd * p;  v = mu * v + g;  p -= lr * v
struct SgdOptions {
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

class Sgd {
public:
    explicit Sgd(SgdOptions options = {}) : options_(options) {}

    /// Updates every trainable entry of `params` for which `grads` has a value.
    void step(ParameterSet& params, const std::map<std::string, Array>& grads, double lr);

    [[nodiscard]] const std::map<std::string, Array>& velocity() const { return velocity_; }
    void set_velocity(std::map<std::string, Array> v) { velocity_ = std::move(v); }

private:
    SgdOptions options_;
    std::map<std::string, Array> velocity_;
};

/// Adam with bias correction.
struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {}

    void step(ParameterSet& params, const std::map<std::string, Array>& grads, double lr);

private:
    AdamOptions options_;
    std::size_t steps_ = 0;
    std::map<std::string, Array> m_;
    std::map<std::string, Array> v_;
};

/// Cosine annealing from base_lr at step 0 to 0 at total_steps.
double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps);

/// Elementwise target <- mu * target + (1 - mu) * source.
void ema_update(ParameterSet& target, const ParameterSet& source, double mu);

/// Adds gradients of `src` into `dst`, scaled by `scale`.
void accumulate_gradients(std::map<std::string, Array>& dst, const std::map<std::string, Array>& src, double scale);

}  // namespace wscod
