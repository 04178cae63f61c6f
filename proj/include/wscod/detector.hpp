// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "wscod/data.hpp"
#include "wscod/msfa.hpp"
#include "wscod/params.hpp"

namespace wscod::det {

/// Prompt-free encoder-decoder: a full-resolution stem, three conv stages at
/// 1/2, 1/4 and 1/8 resolution, one MSFA block per stage added residually,
/// and a skip-connected upsampling decoder ending in one logit map.
struct DetectorDims {
    std::size_t image = 64;
    std::size_t channels = 16;
    std::size_t reduction = 4;

    void validate() const;
};

ParameterSet init_detector(const DetectorDims& dims, Rng& rng);

struct DetectorOutput {
    Tensor logits;  ///< H x W
    Tensor prob;    ///< sigmoid(logits)
};

/// `with_msfa` = false replaces every MSFA block by the identity.
DetectorOutput detector_forward(const BoundParameters& params, const DetectorDims& dims, const Tensor& image,
                                bool with_msfa, msfa::GateMode gates = msfa::GateMode::Learned);

/// Probability map of a 3 x H x W image with constant parameters.
Array predict(const ParameterSet& params, const DetectorDims& dims, const Array& image, bool with_msfa);

struct Stage2Options {
    std::size_t epochs = 8;
    std::size_t batch = 4;
    double lr = 3e-3;
    std::uint64_t seed = 0;
    bool with_msfa = true;
    double flip_probability = 0.5;
};

struct Stage2Step {
    std::size_t step = 0;
    double t = 0.0;      ///< training progress step / total
    double alpha = 0.0;  ///< uncertainty weight at t
    double lr = 0.0;
    double loss = 0.0;
};

struct LabeledImage {
    Array image;         ///< 3 x H x W
    Array pseudo_label;  ///< H x W binary
};

/// BCE + alpha(t) * UAL against pseudo-labels, Adam with cosine-annealed lr.
ParameterSet train_stage2(const DetectorDims& dims, const std::vector<LabeledImage>& data, const Stage2Options& options,
                          const std::function<void(const Stage2Step&)>& on_step);

/// Images of `split` paired with <id>.pgm from `label_dir`. Reads no masks or boxes.
std::vector<LabeledImage> load_pseudo_labeled(const data::Manifest& manifest, data::Split split,
                                              const data::fs::path& label_dir);

/// Writes round(255 p) maps as <id>.pgm for every image of `split`.
void predict_split(const ParameterSet& params, const DetectorDims& dims, const data::Manifest& manifest,
                   data::Split split, const data::fs::path& out_dir, bool with_msfa, std::size_t workers);

}  // namespace wscod::det
