// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wscod/data.hpp"
#include "wscod/gcl.hpp"
#include "wscod/segmenter.hpp"

namespace wscod::triadic {

// ---- augmentation ----------------------------------------------------------

/// Horizontal flip followed by an integer translation.
struct Geometry {
    bool flip = false;
    std::ptrdiff_t dy = 0;
    std::ptrdiff_t dx = 0;

    bool operator==(const Geometry&) const = default;
};

enum class Border { Replicate, Zero };

/// Applies `g` to an H x W or C x H x W array.
Array warp(const Array& a, const Geometry& g, Border border);
data::Box warp_box(const data::Box& box, const Geometry& g, std::size_t width);

struct AugmentOptions {
    double flip_probability = 0.5;
    double max_shift = 0.05;        ///< fraction of the side length
    double noise_std = 0.05;
    double max_cutout_area = 0.2;   ///< fraction of the image area
    std::size_t cutout_attempts = 32;
};

/// Weak and strong views share one geometry, so masks predicted on either
/// view already line up pixel for pixel; `boxes` are the prompts in view
/// coordinates.
struct AugmentationPair {
    Array weak;
    Array strong;
    Geometry geometry;
    std::vector<data::Box> boxes;
    std::optional<data::Box> cutout;
};

/// Deterministic in `seed`. Translations keep every box inside the frame and
/// the cutout never touches a box; if no cutout fits, none is applied.
AugmentationPair augment(const Array& image, const std::vector<data::Box>& boxes, std::uint64_t seed,
                         const AugmentOptions& options = {});

// ---- models ------------------------------------------------------------------

struct TriadicModels {
    seg::SegmenterDims dims;
    ParameterSet anchor;
    ParameterSet student;
    ParameterSet teacher;
};

/// Anchor, student and teacher all start as `base` with freshly drawn
/// adapters; the anchor is frozen entirely.
TriadicModels make_models(const ParameterSet& base, const seg::SegmenterDims& dims, std::uint64_t seed);

/// teacher <- mu * teacher + (1 - mu) * student.
void teacher_update(TriadicModels& models, double mu);

// ---- stage-1 objective -------------------------------------------------------

struct Stage1Options {
    double gamma = 2.0;
    double eps = 1e-6;
    double tau = 0.07;
    gcl::Stage1Weights weights;
    double lambda_student = 0.5;
    double lambda_teacher = 0.5;
    double ema = 0.99;
    /// Global L2 bound on the student gradient; 0 disables clipping.
    double max_grad_norm = 0.0;
    bool fora_stages = true;
    AugmentOptions augment;
};

struct StepReport {
    std::size_t step = 0;
    double lr = 0.0;
    double dice = 0.0;
    double anchor = 0.0;
    double gcl = 0.0;
    double focal = 0.0;
    double total = 0.0;
    double grad_norm = 0.0;  ///< before clipping
    std::size_t gcl_instances = 0;
    /// False if any teacher parameter received gradient from the training loss.
    bool teacher_grad_free = true;
    std::vector<std::string> warnings;
};

/// Batch-mean losses and student gradients without touching any parameters.
StepReport stage1_losses(const TriadicModels& models, const std::vector<data::Sample>& batch,
                         const std::vector<std::uint64_t>& seeds, const Stage1Options& options,
                         std::map<std::string, Array>* student_grads);

/// One SGD step on the student over `batch`, then the teacher update.
StepReport stage1_step(TriadicModels& models, Sgd& sgd, const std::vector<data::Sample>& batch,
                       const std::vector<std::uint64_t>& seeds, const Stage1Options& options, double lr);

struct Schedule {
    std::size_t epochs = 2;
    std::size_t batch = 8;
    double lr = 5e-3;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t steps_per_epoch(std::size_t samples) const;
    [[nodiscard]] std::size_t total_steps(std::size_t samples) const;
    /// Sample indices of step `step`; epochs reshuffle deterministically.
    [[nodiscard]] std::vector<std::size_t> batch_indices(std::size_t samples, std::size_t step) const;
    /// Per-sample augmentation seed.
    [[nodiscard]] std::uint64_t sample_seed(std::size_t step, std::size_t slot) const;
};

struct Stage1State {
    TriadicModels models;
    Sgd sgd;
    std::size_t step = 0;
};

/// Runs steps state.step .. stop_step - 1 with cosine-annealed lr.
void train_stage1(Stage1State& state, const std::vector<data::Sample>& samples, const Stage1Options& options,
                  const Schedule& schedule, std::size_t stop_step,
                  const std::function<void(const StepReport&)>& on_step);

// ---- supervised pretraining of the base model --------------------------------

/// Mean BCE + dice against ground-truth instance masks on a source corpus.
/// Trains everything except the adapters; the result is the frozen base that
/// adaptation starts from.
ParameterSet pretrain(const seg::SegmenterDims& dims, const std::vector<data::Sample>& samples,
                      const Schedule& schedule, const AugmentOptions& augment,
                      const std::function<void(std::size_t step, double lr, double loss)>& on_step);

// ---- pseudo-labels -----------------------------------------------------------

/// Union over prompts of the binarized masks of `params`.
Array pseudo_label(const ParameterSet& params, const seg::SegmenterDims& dims, const Array& image,
                   const std::vector<data::Box>& boxes, bool fora_stages);

/// Writes <id>.pgm for every sample of `split` into `out_dir`.
void export_pseudo_labels(const ParameterSet& params, const seg::SegmenterDims& dims, const data::Manifest& manifest,
                          data::Split split, const data::fs::path& out_dir, bool fora_stages, std::size_t workers);

}  // namespace wscod::triadic
