// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "wscod/parallel.hpp"

namespace wscod::metrics {
namespace {

void require_match(const Array& a, const Array& b) {
    if (a.shape != b.shape) {
        throw ShapeError("prediction " + shape_str(a.shape) + " and ground truth " + shape_str(b.shape) + " differ");
    }
}

struct Counts {
    double tp = 0.0;
    double fp = 0.0;
    double fn = 0.0;
};

Counts count(const Array& pred, const Array& gt) {
    require_match(pred, gt);
    Counts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] > kThreshold;
        const bool g = gt[i] > kThreshold;
        c.tp += p && g ? 1.0 : 0.0;
        c.fp += p && !g ? 1.0 : 0.0;
        c.fn += !p && g ? 1.0 : 0.0;
    }
    return c;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

double mae(const Array& pred, const Array& gt) {
    require_match(pred, gt);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        acc += std::abs(pred[i] - gt[i]);
    }
    return pred.size() ? acc / static_cast<double>(pred.size()) : 0.0;
}

double iou(const Array& pred, const Array& gt) {
    const Counts c = count(pred, gt);
    const double uni = c.tp + c.fp + c.fn;
    return uni == 0.0 ? 1.0 : c.tp / uni;
}

double f1(const Array& pred, const Array& gt) {
    const Counts c = count(pred, gt);
    if (c.tp + c.fp + c.fn == 0.0) {
        return 1.0;
    }
    if (c.tp == 0.0) {
        return 0.0;
    }
    const double precision = c.tp / (c.tp + c.fp);
    const double recall = c.tp / (c.tp + c.fn);
    return 2.0 * precision * recall / (precision + recall);
}

SampleScore score(const std::string& id, const Array& pred, const Array& gt) {
    return SampleScore{id, mae(pred, gt), iou(pred, gt), f1(pred, gt)};
}

Report summarize(std::vector<SampleScore> scores) {
    Report r;
    r.samples = std::move(scores);
    for (const auto& s : r.samples) {
        r.mae += s.mae;
        r.miou += s.iou;
        r.mf1 += s.f1;
    }
    if (!r.samples.empty()) {
        const auto n = static_cast<double>(r.samples.size());
        r.mae /= n;
        r.miou /= n;
        r.mf1 /= n;
    }
    return r;
}

std::string Report::format() const {
    std::ostringstream os;
    os << "count=" << samples.size() << " mae=" << fmt(mae) << " miou=" << fmt(miou) << " mf1=" << fmt(mf1) << '\n';
    for (const auto& s : samples) {
        os << "id=" << s.id << " mae=" << fmt(s.mae) << " iou=" << fmt(s.iou) << " f1=" << fmt(s.f1) << '\n';
    }
    return os.str();
}

Array box_fill(const std::vector<data::Box>& boxes, std::size_t height, std::size_t width) {
    Array out(Shape{height, width}, 0.0);
    for (const auto& b : boxes) {
        const Array r = data::rasterize_box(b, height, width);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = std::max(out[i], r[i]);
        }
    }
    return out;
}

Report evaluate_directories(const data::fs::path& pred_dir, const data::fs::path& gt_dir, std::size_t workers) {
    auto ids_in = [](const data::fs::path& dir) {
        if (!data::fs::is_directory(dir)) {
            throw std::runtime_error("not a directory: " + dir.string());
        }
        std::set<std::string> ids;
        for (const auto& e : data::fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".pgm") {
                ids.insert(e.path().stem().string());
            }
        }
        return ids;
    };
    const auto pred_ids = ids_in(pred_dir);
    const auto gt_ids = ids_in(gt_dir);
    std::string missing;
    for (const auto& id : gt_ids) {
        if (!pred_ids.contains(id)) {
            missing += " " + id + "(no prediction)";
        }
    }
    for (const auto& id : pred_ids) {
        if (!gt_ids.contains(id)) {
            missing += " " + id + "(no ground truth)";
        }
    }
    if (!missing.empty()) {
        throw std::runtime_error("prediction and ground-truth sets differ:" + missing);
    }
    return evaluate_ids(pred_dir, gt_dir, {gt_ids.begin(), gt_ids.end()}, workers);
}

Report evaluate_ids(const data::fs::path& pred_dir, const data::fs::path& gt_dir, const std::vector<std::string>& ids,
                    std::size_t workers) {
    std::string missing;
    for (const auto& id : ids) {
        if (!data::fs::exists(pred_dir / (id + ".pgm"))) {
            missing += " " + id + "(no prediction)";
        }
        if (!data::fs::exists(gt_dir / (id + ".pgm"))) {
            missing += " " + id + "(no ground truth)";
        }
    }
    if (!missing.empty()) {
        throw std::runtime_error("missing files:" + missing);
    }
    std::vector<SampleScore> scores(ids.size());
    parallel_for(ids.size(), workers, [&](std::size_t i) {
        scores[i] = score(ids[i], data::read_pgm(pred_dir / (ids[i] + ".pgm")),
                          data::read_pgm(gt_dir / (ids[i] + ".pgm")));
    });
    return summarize(std::move(scores));
}

}  // namespace wscod::metrics
