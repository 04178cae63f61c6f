// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "wscod/checkpoint.hpp"
#include "wscod/config.hpp"
#include "wscod/metrics.hpp"

/// The commands behind the CLI. Every output carries the config hash, either
/// inside the checkpoint or in a meta.txt next to the maps it describes.
/// Log records are single key=value lines with doubles printed at %.17g.
namespace wscod::pipeline {

namespace fs = std::filesystem;

/// Default artifact locations under config.out.
struct Layout {
    fs::path root;

    [[nodiscard]] fs::path dataset() const { return root / "data"; }
    [[nodiscard]] fs::path base() const { return root / "base.ck"; }
    [[nodiscard]] fs::path stage1_dir() const { return root / "stage1"; }
    [[nodiscard]] fs::path stage1_final() const { return stage1_dir() / "final.ck"; }
    [[nodiscard]] fs::path pseudo(const std::string& source, data::Split split) const {
        return root / "pseudo" / source / data::to_string(split);
    }
    [[nodiscard]] fs::path detector() const { return root / "stage2" / "detector.ck"; }
    [[nodiscard]] fs::path predictions(data::Split split) const { return root / "pred" / data::to_string(split); }
};

Layout layout(const RunConfig& config);

/// "%.17g"
std::string fmt(double v);

data::Manifest gen_data(const RunConfig& config, const fs::path& root);

/// Writes a checkpoint of kind "base" holding group "params".
ckpt::Checkpoint pretrain(const RunConfig& config, const fs::path& out, std::ostream* log);

struct Stage1Run {
    fs::path dataset;
    fs::path base;
    fs::path out_dir;
    /// Continue from this stage-1 checkpoint instead of the base.
    std::optional<fs::path> resume;
    /// Stop after this many steps in total (for interruption tests).
    std::optional<std::size_t> stop_step;
};

/// Trains student and teacher from the base on the train split (images and
/// boxes only). Writes epoch_NNN.ck every stage1.checkpoint_every epochs and
/// final.ck at the end, each with groups anchor, student, teacher, velocity.
ckpt::Checkpoint train_stage1(const RunConfig& config, const Stage1Run& run, std::ostream* log);

/// Which maps make-pseudo writes.
enum class LabelSource { Teacher, Student, Anchor, BoxFill };
LabelSource parse_label_source(const std::string& s);
std::string to_string(LabelSource s);

/// Writes <id>.pgm for every sample of `split`, plus meta.txt. `checkpoint`
/// is ignored for BoxFill.
void make_pseudo(const RunConfig& config, const fs::path& checkpoint, const fs::path& dataset, data::Split split,
                 LabelSource source, const fs::path& out_dir);

/// Trains the detector on the train split's images and the maps in
/// `label_dir`. Reads no masks, boxes or ground truth.
ckpt::Checkpoint train_stage2(const RunConfig& config, const fs::path& dataset, const fs::path& label_dir,
                              const fs::path& out, std::ostream* log);

/// Probability maps of every image in `split`, plus meta.txt.
void predict(const RunConfig& config, const fs::path& detector, const fs::path& dataset, data::Split split,
             const fs::path& out_dir);

/// Scores `pred_dir` against the dataset's ground truth for `split`.
metrics::Report evaluate(const fs::path& pred_dir, const fs::path& dataset, data::Split split, std::size_t workers);

}  // namespace wscod::pipeline
