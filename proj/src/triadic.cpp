// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/triadic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "wscod/losses.hpp"
#include "wscod/parallel.hpp"

namespace wscod::triadic {
namespace {

std::ptrdiff_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    return std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1);
}

// N_p x H x W stack of H x W maps.
Array stack(const std::vector<Array>& maps) {
    const Shape& s = maps.front().shape;
    Array out(Shape{maps.size(), s[0], s[1]});
    std::size_t offset = 0;
    for (const auto& m : maps) {
        std::copy(m.data.begin(), m.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += m.size();
    }
    return out;
}

std::vector<Array> unstack(const Array& a) {
    const std::size_t hw = a.shape[1] * a.shape[2];
    std::vector<Array> out;
    for (std::size_t j = 0; j < a.shape[0]; ++j) {
        Array m(Shape{a.shape[1], a.shape[2]});
        std::copy_n(a.data.begin() + static_cast<std::ptrdiff_t>(j * hw), hw, m.data.begin());
        out.push_back(std::move(m));
    }
    return out;
}

Array union_of(const Array& stacked) { return data::union_mask(unstack(stacked)); }

// Complement of the union of equally sized binary maps.
Array background_of(const std::vector<Array>& fg) {
    Array bg(fg.front().shape, 1.0);
    for (const auto& m : fg) {
        for (std::size_t i = 0; i < bg.size(); ++i) {
            if (m[i] > 0.5) {
                bg[i] = 0.0;
            }
        }
    }
    return bg;
}

}  // namespace

Array warp(const Array& a, const Geometry& g, Border border) {
    if (a.shape.size() != 2 && a.shape.size() != 3) {
        throw ShapeError("warp expects H x W or C x H x W, got " + shape_str(a.shape));
    }
    const std::size_t c = a.shape.size() == 3 ? a.shape[0] : 1;
    const std::size_t h = a.shape[a.shape.size() - 2];
    const std::size_t w = a.shape.back();
    Array out(a.shape, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) - g.dy;
        for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) - g.dx;
            const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(h) &&
                                sx < static_cast<std::ptrdiff_t>(w);
            if (!inside && border == Border::Zero) {
                continue;
            }
            const auto yy = static_cast<std::size_t>(clamp_index(sy, h));
            auto xx = static_cast<std::size_t>(clamp_index(sx, w));
            if (g.flip) {
                xx = w - 1 - xx;
            }
            for (std::size_t ch = 0; ch < c; ++ch) {
                out[(ch * h + y) * w + x] = a[(ch * h + yy) * w + xx];
            }
        }
    }
    return out;
}

data::Box warp_box(const data::Box& box, const Geometry& g, std::size_t width) {
    data::Box b = box;
    if (g.flip) {
        b.col0 = width - 1 - box.col1;
        b.col1 = width - 1 - box.col0;
    }
    b.row0 = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(b.row0) + g.dy);
    b.row1 = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(b.row1) + g.dy);
    b.col0 = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(b.col0) + g.dx);
    b.col1 = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(b.col1) + g.dx);
    return b;
}

AugmentationPair augment(const Array& image, const std::vector<data::Box>& boxes, std::uint64_t seed,
                         const AugmentOptions& options) {
    if (image.shape.size() != 3) {
        throw ShapeError("augment expects a C x H x W image, got " + shape_str(image.shape));
    }
    const std::size_t h = image.shape[1];
    const std::size_t w = image.shape[2];
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    AugmentationPair pair;
    pair.geometry.flip = unit(rng) < options.flip_probability;
    std::vector<data::Box> flipped;
    for (const auto& b : boxes) {
        flipped.push_back(warp_box(b, Geometry{pair.geometry.flip, 0, 0}, w));
    }
    // Shift range that keeps every box in frame.
    auto shift_range = [&](std::size_t side, auto lo_of, auto hi_of) {
        const auto limit = static_cast<std::ptrdiff_t>(std::floor(options.max_shift * static_cast<double>(side)));
        std::ptrdiff_t lo = -limit;
        std::ptrdiff_t hi = limit;
        for (const auto& b : flipped) {
            lo = std::max(lo, -static_cast<std::ptrdiff_t>(lo_of(b)));
            hi = std::min(hi, static_cast<std::ptrdiff_t>(side - 1 - hi_of(b)));
        }
        return std::pair{lo, hi};
    };
    const auto [ylo, yhi] = shift_range(h, [](const data::Box& b) { return b.row0; },
                                        [](const data::Box& b) { return b.row1; });
    const auto [xlo, xhi] = shift_range(w, [](const data::Box& b) { return b.col0; },
                                        [](const data::Box& b) { return b.col1; });
    pair.geometry.dy = std::uniform_int_distribution<std::ptrdiff_t>(ylo, yhi)(rng);
    pair.geometry.dx = std::uniform_int_distribution<std::ptrdiff_t>(xlo, xhi)(rng);
    for (const auto& b : boxes) {
        pair.boxes.push_back(warp_box(b, pair.geometry, w));
    }
    pair.weak = warp(image, pair.geometry, Border::Replicate);

    pair.strong = pair.weak;
    std::normal_distribution<double> noise(0.0, options.noise_std);
    for (auto& v : pair.strong.data) {
        v = std::clamp(v + noise(rng), 0.0, 1.0);
    }
    const double max_area = options.max_cutout_area * static_cast<double>(h * w);
    for (std::size_t attempt = 0; attempt < options.cutout_attempts; ++attempt) {
        const auto ch = std::uniform_int_distribution<std::size_t>(std::max<std::size_t>(1, h / 8), h / 2)(rng);
        const auto cw_max = std::min(w / 2, static_cast<std::size_t>(max_area / static_cast<double>(ch)));
        if (cw_max < 1) {
            continue;
        }
        const auto cw = std::uniform_int_distribution<std::size_t>(std::min(cw_max, std::max<std::size_t>(1, w / 8)),
                                                                   cw_max)(rng);
        const auto r0 = std::uniform_int_distribution<std::size_t>(0, h - ch)(rng);
        const auto c0 = std::uniform_int_distribution<std::size_t>(0, w - cw)(rng);
        const data::Box cut{r0, c0, r0 + ch - 1, c0 + cw - 1};
        if (std::any_of(pair.boxes.begin(), pair.boxes.end(), [&](const data::Box& b) { return b.intersects(cut); })) {
            continue;
        }
        for (std::size_t c = 0; c < image.shape[0]; ++c) {
            for (std::size_t y = cut.row0; y <= cut.row1; ++y) {
                for (std::size_t x = cut.col0; x <= cut.col1; ++x) {
                    pair.strong[(c * h + y) * w + x] = 0.5;
                }
            }
        }
        pair.cutout = cut;
        break;
    }
    return pair;
}

TriadicModels make_models(const ParameterSet& base, const seg::SegmenterDims& dims, std::uint64_t seed) {
    TriadicModels m;
    m.dims = dims;
    m.student = base;
    Rng rng(derive_seed(seed, {0xada97e}));
    seg::reset_adapters(m.student, dims, rng);
    seg::mark_adaptation_trainable(m.student);
    m.teacher = m.student;
    m.anchor = m.student;
    for (auto& e : m.anchor.entries()) {
        e.trainable = false;
    }
    return m;
}

void teacher_update(TriadicModels& models, double mu) { ema_update(models.teacher, models.student, mu); }

StepReport stage1_losses(const TriadicModels& models, const std::vector<data::Sample>& batch,
                         const std::vector<std::uint64_t>& seeds, const Stage1Options& options,
                         std::map<std::string, Array>* student_grads) {
    if (batch.empty() || batch.size() != seeds.size()) {
        throw std::invalid_argument("stage-1 batch needs one seed per sample");
    }
    const auto& dims = models.dims;
    const bool with_gcl = options.weights.gcl != 0.0;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    StepReport report;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& sample = batch[i];
        if (sample.boxes.empty()) {
            throw std::invalid_argument("stage-1 sample has no prompt boxes");
        }
        const AugmentationPair pair = augment(sample.image, sample.boxes, seeds[i], options.augment);

        Tape tape;
        // Anchor: constant forward on the weak view.
        const seg::MaskBundle anchor = seg::predict_masks(BoundParameters(models.anchor, nullptr, Binding::Constant),
                                                          dims, Tensor(pair.weak), pair.boxes, options.fora_stages);

        // Teacher: every parameter is a leaf so a leak into the training
        // gradient would be visible. The decoder runs on a watched copy of
        // F^t, which keeps the activation-map sweep inside the decoder.
        const BoundParameters teacher_bound(models.teacher, &tape, Binding::All);
        const Tensor teacher_raw = seg::encode(teacher_bound, dims, Tensor(pair.weak), options.fora_stages);
        const Tensor teacher_features = tape.watch(teacher_raw);
        const seg::MaskBundle teacher =
            seg::bundle(seg::decode(teacher_bound, dims, teacher_features, pair.boxes));

        const BoundParameters student_bound(models.student, &tape, Binding::Trainable);
        const Tensor student_features = seg::encode(student_bound, dims, Tensor(pair.strong), options.fora_stages);
        const seg::MaskBundle student = seg::bundle(seg::decode(student_bound, dims, student_features, pair.boxes));

        gcl::Stage1Terms terms;
        terms.dice = losses::dice(student.probs, teacher.binary, options.eps);
        terms.focal = losses::focal(student.probs, teacher.binary, options.gamma);
        terms.anchor = losses::anchor(student.probs, teacher.probs.detach(), anchor.binary, options.lambda_student,
                                      options.lambda_teacher, options.eps);
        terms.gcl = Tensor::scalar(0.0);
        if (with_gcl) {
            const Array fg_union = union_of(teacher.binary);
            Array cam(Shape{dims.grid().height, dims.grid().width}, 1.0);
            if (std::any_of(fg_union.data.begin(), fg_union.data.end(), [](double v) { return v > 0.5; })) {
                Array region(teacher.binary.shape);
                const std::size_t hw = fg_union.size();
                for (std::size_t k = 0; k < region.size(); ++k) {
                    region[k] = fg_union[k % hw];
                }
                cam = gcl::grad_cam(teacher_features, sum(teacher.logits * Tensor(std::move(region))));
            }
            std::vector<Array> fg;
            for (const auto& m : unstack(teacher.binary)) {
                fg.push_back(gcl::downsample_majority(m, dims.patch));
            }
            const Array bg = gcl::weighted_bg_mask(background_of(fg), cam);
            const auto student_protos = gcl::prototype_pool(gcl::l2_normalize_channels(student_features), fg, bg);
            const auto teacher_protos =
                gcl::prototype_pool(gcl::l2_normalize_channels(teacher_raw.detach()), fg, bg);
            auto contrast = gcl::gcl_loss(student_protos, teacher_protos, options.tau);
            terms.gcl = contrast.loss;
            report.gcl_instances += contrast.instances;
            if (!contrast.warning.empty()) {
                report.warnings.push_back(contrast.warning);
            }
        }
        const Tensor total = gcl::total_stage1_loss(terms, options.weights);
        report.dice += terms.dice.item() * inv_batch;
        report.anchor += terms.anchor.item() * inv_batch;
        report.gcl += terms.gcl.item() * inv_batch;
        report.focal += terms.focal.item() * inv_batch;
        report.total += total.item() * inv_batch;

        if (student_grads != nullptr && total.requires_grad()) {
            const GradChannel channel = tape.backward(total);
            for (const auto& [name, leaf] : teacher_bound.leaves()) {
                if (channel.has(leaf)) {
                    report.teacher_grad_free = false;
                }
            }
            accumulate_gradients(*student_grads, student_bound.gradients(channel), inv_batch);
        }
    }
    return report;
}

StepReport stage1_step(TriadicModels& models, Sgd& sgd, const std::vector<data::Sample>& batch,
                       const std::vector<std::uint64_t>& seeds, const Stage1Options& options, double lr) {
    std::map<std::string, Array> grads;
    StepReport report = stage1_losses(models, batch, seeds, options, &grads);
    report.lr = lr;
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        for (double v : g.data) {
            sq += v * v;
        }
    }
    report.grad_norm = std::sqrt(sq);
    if (options.max_grad_norm > 0.0 && report.grad_norm > options.max_grad_norm) {
        const double scale = options.max_grad_norm / report.grad_norm;
        for (auto& [name, g] : grads) {
            for (auto& v : g.data) {
                v *= scale;
            }
        }
    }
    sgd.step(models.student, grads, lr);
    teacher_update(models, options.ema);
    return report;
}

std::size_t Schedule::steps_per_epoch(std::size_t samples) const {
    if (batch == 0) {
        throw std::invalid_argument("batch size must be positive");
    }
    return (samples + batch - 1) / batch;
}

std::size_t Schedule::total_steps(std::size_t samples) const { return epochs * steps_per_epoch(samples); }

std::vector<std::size_t> Schedule::batch_indices(std::size_t samples, std::size_t step) const {
    const std::size_t per_epoch = steps_per_epoch(samples);
    const std::size_t epoch = step / per_epoch;
    const std::size_t first = (step % per_epoch) * batch;
    std::vector<std::size_t> order(samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {0x5b0ff1e, epoch}));
    for (std::size_t i = samples; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    const std::size_t last = std::min(samples, first + batch);
    return {order.begin() + static_cast<std::ptrdiff_t>(first), order.begin() + static_cast<std::ptrdiff_t>(last)};
}

std::uint64_t Schedule::sample_seed(std::size_t step, std::size_t slot) const {
    return derive_seed(seed, {0xa06, step, slot});
}

void train_stage1(Stage1State& state, const std::vector<data::Sample>& samples, const Stage1Options& options,
                  const Schedule& schedule, std::size_t stop_step,
                  const std::function<void(const StepReport&)>& on_step) {
    const std::size_t total = schedule.total_steps(samples.size());
    stop_step = std::min(stop_step, total);
    for (; state.step < stop_step; ++state.step) {
        std::vector<data::Sample> batch;
        std::vector<std::uint64_t> seeds;
        const auto idx = schedule.batch_indices(samples.size(), state.step);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            batch.push_back(samples[idx[k]]);
            seeds.push_back(schedule.sample_seed(state.step, k));
        }
        const double lr = cosine_lr(schedule.lr, state.step, total);
        StepReport r = stage1_step(state.models, state.sgd, batch, seeds, options, lr);
        r.step = state.step;
        if (on_step) {
            on_step(r);
        }
    }
}

ParameterSet pretrain(const seg::SegmenterDims& dims, const std::vector<data::Sample>& samples,
                      const Schedule& schedule, const AugmentOptions& augment_options,
                      const std::function<void(std::size_t, double, double)>& on_step) {
    Rng rng(derive_seed(schedule.seed, {0x9e7a1}));
    ParameterSet params = seg::init_segmenter(dims, rng);
    seg::mark_pretraining_trainable(params);
    Adam adam;
    const std::size_t total = schedule.total_steps(samples.size());
    for (std::size_t step = 0; step < total; ++step) {
        const auto idx = schedule.batch_indices(samples.size(), step);
        const double inv = 1.0 / static_cast<double>(idx.size());
        std::map<std::string, Array> grads;
        double loss_sum = 0.0;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto& s = samples[idx[k]];
            if (s.masks.size() != s.boxes.size()) {
                throw std::invalid_argument("pretraining needs one ground-truth mask per box");
            }
            const auto pair = augment(s.image, s.boxes, schedule.sample_seed(step, k), augment_options);
            std::vector<Array> targets;
            for (const auto& m : s.masks) {
                targets.push_back(warp(m, pair.geometry, Border::Zero));
            }
            const Array target = stack(targets);
            Tape tape;
            const BoundParameters bound(params, &tape, Binding::Trainable);
            const auto mb = seg::predict_masks(bound, dims, Tensor(pair.weak), pair.boxes, false);
            const Tensor loss = losses::bce(mb.probs, target) + losses::dice(mb.probs, target, 1e-6) *
                                                                    (1.0 / static_cast<double>(targets.size()));
            loss_sum += loss.item() * inv;
            accumulate_gradients(grads, bound.gradients(tape.backward(loss)), inv);
        }
        const double lr = cosine_lr(schedule.lr, step, total);
        adam.step(params, grads, lr);
        if (on_step) {
            on_step(step, lr, loss_sum);
        }
    }
    seg::mark_adaptation_trainable(params);
    return params;
}

Array pseudo_label(const ParameterSet& params, const seg::SegmenterDims& dims, const Array& image,
                   const std::vector<data::Box>& boxes, bool fora_stages) {
    const auto mb = seg::predict_masks(BoundParameters(params, nullptr, Binding::Constant), dims, Tensor(image),
                                       boxes, fora_stages);
    return union_of(mb.binary);
}

void export_pseudo_labels(const ParameterSet& params, const seg::SegmenterDims& dims, const data::Manifest& manifest,
                          data::Split split, const data::fs::path& out_dir, bool fora_stages, std::size_t workers) {
    const auto records = manifest.split(split);
    std::error_code ec;
    data::fs::create_directories(out_dir, ec);
    if (ec) {
        throw std::runtime_error(out_dir.string() + ": " + ec.message());
    }
    parallel_for(records.size(), workers, [&](std::size_t i) {
        const auto& r = *records[i];
        const data::Sample s = data::load_sample(manifest, r, false);
        data::write_pgm(out_dir / (r.id + ".pgm"), pseudo_label(params, dims, s.image, s.boxes, fora_stages));
    });
}

}  // namespace wscod::triadic
