// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/params.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace wscod {

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(seed);
    for (auto s : stream) {
        h = mix(h ^ mix(s));
    }
    return h;
}

Array random_normal(Shape shape, double stddev, Rng& rng) {
    Array a(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : a.data) {
        v = dist(rng);
    }
    return a;
}

Array delta_kernel(std::size_t channels, std::size_t k, double value) {
    Array a(Shape{channels, channels, k, k});
    for (std::size_t c = 0; c < channels; ++c) {
        a[((c * channels + c) * k + k / 2) * k + k / 2] = value;
    }
    return a;
}

Array identity_matrix(std::size_t n) {
    Array a(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) {
        a[i * n + i] = 1.0;
    }
    return a;
}

void ParameterSet::add(std::string name, Array value, bool trainable) {
    if (index_.contains(name)) {
        throw std::invalid_argument("duplicate parameter '" + name + "'");
    }
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value), trainable});
}

bool ParameterSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

const ParameterSet::Entry& ParameterSet::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) {
        throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
    }
    return entries_[it->second];
}

const Array& ParameterSet::at(std::string_view name) const { return find(name).value; }

Array& ParameterSet::at(std::string_view name) { return const_cast<Entry&>(find(name)).value; }

bool ParameterSet::trainable(std::string_view name) const { return find(name).trainable; }

void ParameterSet::set_trainable(std::string_view name, bool trainable) {
    const_cast<Entry&>(find(name)).trainable = trainable;
}

void ParameterSet::set_trainable_prefix(std::string_view prefix, bool trainable) {
    for (auto& e : entries_) {
        if (e.name.starts_with(prefix)) {
            e.trainable = trainable;
        }
    }
}

std::size_t ParameterSet::scalar_count(bool trainable_only) const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        if (!trainable_only || e.trainable) {
            n += e.value.size();
        }
    }
    return n;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
    if (entries_.size() != other.entries_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name || entries_[i].value.shape != other.entries_[i].value.shape) {
            return false;
        }
    }
    return true;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
    if (!same_layout(other)) {
        return false;
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].value.data != other.entries_[i].value.data) {
            return false;
        }
    }
    return true;
}

BoundParameters::BoundParameters(const ParameterSet& params, Tape* tape, Binding binding) {
    for (const auto& e : params.entries()) {
        const bool as_leaf = tape != nullptr && (binding == Binding::All || (binding == Binding::Trainable && e.trainable));
        Tensor t = as_leaf ? tape->leaf(e.value) : Tensor(e.value);
        if (as_leaf) {
            leaves_.emplace_back(e.name, t);
        }
        tensors_.emplace(e.name, std::move(t));
    }
}

const Tensor& BoundParameters::operator[](std::string_view name) const {
    auto it = tensors_.find(std::string(name));
    if (it == tensors_.end()) {
        throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
    }
    return it->second;
}

bool BoundParameters::contains(std::string_view name) const { return tensors_.contains(std::string(name)); }

std::map<std::string, Array> BoundParameters::gradients(const GradChannel& channel) const {
    std::map<std::string, Array> out;
    for (const auto& [name, t] : leaves_) {
        out.emplace(name, channel.grad(t));
    }
    return out;
}

void Sgd::step(ParameterSet& params, const std::map<std::string, Array>& grads, double lr) {
    for (auto& e : params.entries()) {
        if (!e.trainable) {
            continue;
        }
        auto git = grads.find(e.name);
        if (git == grads.end()) {
            continue;
        }
        const auto& g = git->second.data;
        if (g.size() != e.value.size()) {
            throw ShapeError("gradient for '" + e.name + "' has wrong size");
        }
        auto [vit, inserted] = velocity_.try_emplace(e.name, Array(e.value.shape, 0.0));
        auto& v = vit->second.data;
        auto& p = e.value.data;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i] + options_.weight_decay * p[i];
            v[i] = options_.momentum * v[i] + gi;
            p[i] -= lr * v[i];
        }
    }
}

void Adam::step(ParameterSet& params, const std::map<std::string, Array>& grads, double lr) {
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    for (auto& e : params.entries()) {
        auto git = grads.find(e.name);
        if (!e.trainable || git == grads.end()) {
            continue;
        }
        const auto& g = git->second.data;
        if (g.size() != e.value.size()) {
            throw ShapeError("gradient for '" + e.name + "' has wrong size");
        }
        auto& m = m_.try_emplace(e.name, Array(e.value.shape, 0.0)).first->second.data;
        auto& v = v_.try_emplace(e.name, Array(e.value.shape, 0.0)).first->second.data;
        auto& p = e.value.data;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
            v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
        }
    }
}

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
    if (total_steps == 0) {
        return base_lr;
    }
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * t));
}

void ema_update(ParameterSet& target, const ParameterSet& source, double mu) {
    if (!target.same_layout(source)) {
        throw std::invalid_argument("ema_update: parameter layouts differ");
    }
    for (std::size_t i = 0; i < target.size(); ++i) {
        auto& t = target.entries()[i].value.data;
        const auto& s = source.entries()[i].value.data;
        for (std::size_t j = 0; j < t.size(); ++j) {
            if (t[j] != s[j]) {
                t[j] = mu * t[j] + (1.0 - mu) * s[j];
            }
        }
    }
}

void accumulate_gradients(std::map<std::string, Array>& dst, const std::map<std::string, Array>& src, double scale) {
    for (const auto& [name, g] : src) {
        auto [it, inserted] = dst.try_emplace(name, Array(g.shape, 0.0));
        auto& d = it->second.data;
        for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] += scale * g.data[i];
        }
    }
}

}  // namespace wscod
