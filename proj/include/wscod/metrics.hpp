// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "wscod/data.hpp"

namespace wscod::metrics {

/// Threshold applied to predictions (and ground truth) before IoU and F1.
inline constexpr double kThreshold = 0.5;

/// Mean absolute pixel difference.
double mae(const Array& pred, const Array& gt);
/// |P and G| / |P or G| with P = pred > 0.5; 1 when both are empty.
double iou(const Array& pred, const Array& gt);
/// 2 precision recall / (precision + recall); 1 when both are empty, 0 when only one is.
double f1(const Array& pred, const Array& gt);

struct SampleScore {
    std::string id;
    double mae = 0.0;
    double iou = 0.0;
    double f1 = 0.0;
};

struct Report {
    std::vector<SampleScore> samples;
    double mae = 0.0;
    double miou = 0.0;
    double mf1 = 0.0;

    /// key=value lines: the means, then one line per sample.
    [[nodiscard]] std::string format() const;
};

/// Scores the (id, prediction, truth) triples and averages them.
Report summarize(std::vector<SampleScore> scores);
SampleScore score(const std::string& id, const Array& pred, const Array& gt);

/// Box-fill baseline: 1 inside every box.
Array box_fill(const std::vector<data::Box>& boxes, std::size_t height, std::size_t width);

/// Compares every <id>.pgm in `pred_dir` with the same file in `gt_dir`.
/// Throws std::runtime_error listing ids present in one directory only.
Report evaluate_directories(const data::fs::path& pred_dir, const data::fs::path& gt_dir, std::size_t workers = 1);

/// Scores only `ids`; throws listing every id missing from either directory.
Report evaluate_ids(const data::fs::path& pred_dir, const data::fs::path& gt_dir, const std::vector<std::string>& ids,
                    std::size_t workers = 1);

}  // namespace wscod::metrics
