// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "wscod/data.hpp"
#include "wscod/detector.hpp"
#include "wscod/segmenter.hpp"
#include "wscod/triadic.hpp"

namespace wscod {

/// Supervised pretraining of the shared base on a source corpus that is
/// generated in memory and never written to disk.
struct PretrainConfig {
    std::size_t count = 200;
    double difficulty = 0.2;
    std::uint64_t seed = 100;
    std::size_t epochs = 40;
    std::size_t batch = 8;
    double lr = 2e-3;
};

struct Stage1Config {
    double gamma = 2.0;
    double eps = 1e-6;
    double tau = 0.07;
    double lambda_anchor = 0.5;
    double lambda_gcl = 1.0;
    double lambda_focal = 20.0;
    double lambda_student = 0.5;
    double lambda_teacher = 0.5;
    double ema = 0.99;
    double lr = 5e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t epochs = 2;
    std::size_t batch = 8;
    double max_grad_norm = 0.0;
    std::size_t checkpoint_every = 1;  ///< epochs between checkpoints
    triadic::AugmentOptions augment;
};

struct Stage2Config {
    double lr = 3e-3;
    std::size_t epochs = 8;
    std::size_t batch = 4;
    double flip_probability = 0.5;
};

struct Ablation {
    bool fora = false;
    bool gcl = false;
    bool msfa = false;
};

struct RunConfig {
    data::GeneratorParams data{250, 64, 64, 0.5, 7, 0.2};
    PretrainConfig pretrain;
    seg::SegmenterDims segmenter;
    Stage1Config stage1;
    det::DetectorDims detector;
    Stage2Config stage2;
    Ablation ablate;
    std::uint64_t seed = 0;
    std::string out = "runs/default";
    std::size_t workers = 1;

    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;

    /// Canonical JSON with sorted keys.
    [[nodiscard]] std::string to_json() const;
    /// 16 hex digits of FNV-1a over to_json(), ignoring `out` and `workers`
    /// since neither changes any result.
    [[nodiscard]] std::string hash() const;

    [[nodiscard]] triadic::Stage1Options stage1_options() const;
    [[nodiscard]] triadic::Schedule stage1_schedule() const;
    [[nodiscard]] det::Stage2Options stage2_options() const;
};

/// Parses JSON text; every key is optional, unknown keys are errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Applies "fora", "gcl" or "msfa"; anything else throws std::invalid_argument.
void apply_ablation(RunConfig& config, const std::string& component);

}  // namespace wscod
