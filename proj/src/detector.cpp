// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/detector.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "wscod/losses.hpp"
#include "wscod/parallel.hpp"

namespace wscod::det {
namespace {

constexpr std::size_t kStages = 3;

std::string stage_name(std::size_t i) { return "stage" + std::to_string(i + 1); }

Array he_kernel(std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
    return random_normal({out, in, k, k}, std::sqrt(2.0 / static_cast<double>(in * k * k)), rng);
}

Tensor conv_relu(const BoundParameters& p, const std::string& name, const Tensor& x) {
    return relu(conv2d(x, p[name + ".w"], p[name + ".b"]));
}

Array hflip(const Array& a) {
    const std::size_t w = a.shape.back();
    Array out(a.shape);
    for (std::size_t row = 0; row < a.size() / w; ++row) {
        for (std::size_t x = 0; x < w; ++x) {
            out[row * w + x] = a[row * w + (w - 1 - x)];
        }
    }
    return out;
}

// Zero-mean, unit-variance per channel, so objects show up as deviations from
// their own image's statistics.
Tensor standardize(const Tensor& image) {
    Array a = image.array();
    const std::size_t plane = a.shape[1] * a.shape[2];
    for (std::size_t c = 0; c < a.shape[0]; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            mean += a[c * plane + i];
        }
        mean /= static_cast<double>(plane);
        double var = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            var += (a[c * plane + i] - mean) * (a[c * plane + i] - mean);
        }
        const double inv = 1.0 / std::sqrt(var / static_cast<double>(plane) + 1e-6);
        for (std::size_t i = 0; i < plane; ++i) {
            a[c * plane + i] = (a[c * plane + i] - mean) * inv;
        }
    }
    return Tensor(std::move(a));
}

}  // namespace

void DetectorDims::validate() const {
    if (image % (1u << kStages) != 0 || image / (1u << kStages) < 4) {
        throw std::invalid_argument("detector image size must be a multiple of 8 and at least 32");
    }
    if (channels == 0 || reduction == 0 || channels % reduction != 0) {
        throw std::invalid_argument("detector reduction ratio must divide the channel count");
    }
}

ParameterSet init_detector(const DetectorDims& dims, Rng& rng) {
    dims.validate();
    const std::size_t c = dims.channels;
    ParameterSet p;
    auto conv = [&](const std::string& name, std::size_t out, std::size_t in) {
        p.add(name + ".w", he_kernel(out, in, 3, rng));
        p.add(name + ".b", Array({out}, 0.0));
    };
    conv("stem", c, 3);
    for (std::size_t i = 0; i < kStages; ++i) {
        conv(stage_name(i) + ".conv", c, c);
        msfa::add_block(p, stage_name(i) + ".msfa", c, dims.reduction, rng);
    }
    conv("up2", c, 2 * c);
    conv("up1", c, 2 * c);
    p.add("head.w", random_normal({1, 2 * c, 3, 3}, 0.01, rng));
    p.add("head.b", Array({1}, 0.0));
    return p;
}

DetectorOutput detector_forward(const BoundParameters& params, const DetectorDims& dims, const Tensor& image,
                                bool with_msfa, msfa::GateMode gates) {
    if (image.shape() != Shape{3, dims.image, dims.image}) {
        throw ShapeError("detector expects a 3 x " + std::to_string(dims.image) + " x " + std::to_string(dims.image) +
                         " image, got " + shape_str(image.shape()));
    }
    const Tensor stem = conv_relu(params, "stem", standardize(image));
    std::vector<Tensor> skips;
    Tensor x = stem;
    for (std::size_t i = 0; i < kStages; ++i) {
        const std::string s = stage_name(i);
        x = conv_relu(params, s + ".conv", avg_pool2d(x, 2));
        if (with_msfa) {
            const auto block = msfa::MsfaBlock::bind(params, s + ".msfa");
            x = x + msfa::msfa_forward(block, msfa::from_stage(x), gates);
        }
        skips.push_back(x);
    }
    Tensor d = skips[2];
    d = conv_relu(params, "up2", concat({upsample_nearest(d, 2), skips[1]}));
    d = conv_relu(params, "up1", concat({upsample_nearest(d, 2), skips[0]}));
    const Tensor logits = conv2d(concat({upsample_nearest(d, 2), stem}), params["head.w"], params["head.b"]);
    DetectorOutput out;
    out.logits = reshape(logits, Shape{dims.image, dims.image});
    out.prob = sigmoid(out.logits);
    return out;
}

Array predict(const ParameterSet& params, const DetectorDims& dims, const Array& image, bool with_msfa) {
    return detector_forward(BoundParameters(params, nullptr, Binding::Constant), dims, Tensor(image), with_msfa)
        .prob.array();
}

ParameterSet train_stage2(const DetectorDims& dims, const std::vector<LabeledImage>& data, const Stage2Options& options,
                          const std::function<void(const Stage2Step&)>& on_step) {
    if (data.empty()) {
        throw std::invalid_argument("stage-2 training needs at least one pseudo-labeled image");
    }
    if (options.batch == 0) {
        throw std::invalid_argument("batch size must be positive");
    }
    Rng rng(derive_seed(options.seed, {0xde7}));
    ParameterSet params = init_detector(dims, rng);
    Adam adam;
    const std::size_t per_epoch = (data.size() + options.batch - 1) / options.batch;
    const std::size_t total = options.epochs * per_epoch;
    std::vector<std::size_t> order(data.size());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t step = 0; step < total; ++step) {
        if (step % per_epoch == 0) {
            for (std::size_t i = 0; i < order.size(); ++i) {
                order[i] = i;
            }
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
            }
        }
        const double t = static_cast<double>(step) / static_cast<double>(total);
        const std::size_t first = (step % per_epoch) * options.batch;
        const std::size_t last = std::min(data.size(), first + options.batch);
        const double inv = 1.0 / static_cast<double>(last - first);
        std::map<std::string, Array> grads;
        double loss_sum = 0.0;
        for (std::size_t k = first; k < last; ++k) {
            const auto& item = data[order[k]];
            const bool flip = unit(rng) < options.flip_probability;
            const Array image = flip ? hflip(item.image) : item.image;
            const Array label = flip ? hflip(item.pseudo_label) : item.pseudo_label;
            Tape tape;
            const BoundParameters bound(params, &tape, Binding::Trainable);
            const auto out = detector_forward(bound, dims, Tensor(image), options.with_msfa);
            const Tensor loss = losses::stage2(out.prob, label, t);
            loss_sum += loss.item() * inv;
            accumulate_gradients(grads, bound.gradients(tape.backward(loss)), inv);
        }
        const double lr = cosine_lr(options.lr, step, total);
        adam.step(params, grads, lr);
        if (on_step) {
            on_step(Stage2Step{step, t, losses::uncertainty_weight(t), lr, loss_sum});
        }
    }
    return params;
}

std::vector<LabeledImage> load_pseudo_labeled(const data::Manifest& manifest, data::Split split,
                                              const data::fs::path& label_dir) {
    std::vector<LabeledImage> out;
    for (const auto* r : manifest.split(split)) {
        LabeledImage item;
        item.image = data::read_ppm(manifest.root / r->image);
        const auto label_path = label_dir / (r->id + ".pgm");
        item.pseudo_label = data::read_pgm(label_path);
        if (item.pseudo_label.shape != Shape{item.image.shape[1], item.image.shape[2]}) {
            throw std::runtime_error(label_path.string() + ": pseudo-label size does not match its image");
        }
        for (auto& v : item.pseudo_label.data) {
            v = v > 0.5 ? 1.0 : 0.0;
        }
        out.push_back(std::move(item));
    }
    return out;
}

void predict_split(const ParameterSet& params, const DetectorDims& dims, const data::Manifest& manifest,
                   data::Split split, const data::fs::path& out_dir, bool with_msfa, std::size_t workers) {
    const auto records = manifest.split(split);
    data::fs::create_directories(out_dir);
    parallel_for(records.size(), workers, [&](std::size_t i) {
        const auto& r = *records[i];
        const Array image = data::read_ppm(manifest.root / r.image);
        data::write_pgm(out_dir / (r.id + ".pgm"), predict(params, dims, image, with_msfa));
    });
}

}  // namespace wscod::det
