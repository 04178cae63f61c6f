// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "wscod/hash.hpp"
#include "wscod/parallel.hpp"

namespace wscod::pipeline {
namespace {

std::vector<data::Sample> load_split(const data::Manifest& m, data::Split split, bool with_masks) {
    std::vector<data::Sample> out;
    for (const auto* r : m.split(split)) {
        out.push_back(data::load_sample(m, *r, with_masks));
    }
    if (out.empty()) {
        throw std::runtime_error(m.root.string() + ": the " + data::to_string(split) + " split is empty");
    }
    return out;
}

data::Manifest open_dataset(const fs::path& root) {
    if (!fs::exists(root / data::kManifestName)) {
        throw std::runtime_error("no dataset at " + root.string() + " (run gen-data first)");
    }
    return data::load_manifest(root);
}

void write_meta(const fs::path& dir, const std::map<std::string, std::string>& fields) {
    std::ofstream out(dir / "meta.txt", std::ios::trunc);
    for (const auto& [k, v] : fields) {
        out << k << '=' << v << '\n';
    }
    if (!out) {
        throw std::runtime_error((dir / "meta.txt").string() + ": write failed");
    }
}

ckpt::Checkpoint load_kind(const fs::path& path, const std::string& kind) {
    auto c = ckpt::load(path);
    if (c.kind != kind) {
        throw std::runtime_error(path.string() + ": expected a " + kind + " checkpoint, found " + c.kind);
    }
    return c;
}

ckpt::Checkpoint stage1_checkpoint(const RunConfig& config, const triadic::Stage1State& state, std::size_t total,
                                   std::uint64_t base_hash) {
    ckpt::Checkpoint c;
    c.kind = "stage1";
    c.config_hash = config.hash();
    c.step = state.step;
    c.meta["seed"] = std::to_string(config.seed);
    c.meta["total_steps"] = std::to_string(total);
    c.meta["base_hash"] = hex64(base_hash);
    c.meta["fora_stages"] = config.ablate.fora ? "0" : "1";
    c.set_group("anchor", state.models.anchor);
    c.set_group("student", state.models.student);
    c.set_group("teacher", state.models.teacher);
    c.set_group("velocity", ckpt::from_map(state.sgd.velocity()));
    return c;
}

std::string epoch_name(std::size_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%03zu.ck", epoch);
    return buf;
}

}  // namespace

Layout layout(const RunConfig& config) { return Layout{config.out}; }

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

data::Manifest gen_data(const RunConfig& config, const fs::path& root) {
    return data::generate_dataset(config.data, root);
}

ckpt::Checkpoint pretrain(const RunConfig& config, const fs::path& out, std::ostream* log) {
    data::GeneratorParams gp = config.data;
    gp.count = config.pretrain.count;
    gp.difficulty = config.pretrain.difficulty;
    gp.seed = config.pretrain.seed;
    std::vector<data::Sample> samples;
    for (std::size_t i = 0; i < gp.count; ++i) {
        samples.push_back(data::generate_sample(gp, i));
    }
    const triadic::Schedule schedule{config.pretrain.epochs, config.pretrain.batch, config.pretrain.lr,
                                     config.pretrain.seed};
    ParameterSet params =
        triadic::pretrain(config.segmenter, samples, schedule, config.stage1.augment,
                          [&](std::size_t step, double lr, double loss) {
                              if (log != nullptr) {
                                  *log << "step=" << step << " lr=" << fmt(lr) << " loss=" << fmt(loss) << '\n';
                              }
                          });
    ckpt::Checkpoint c;
    c.kind = "base";
    c.config_hash = config.hash();
    c.step = schedule.total_steps(samples.size());
    c.meta["source_difficulty"] = fmt(gp.difficulty);
    c.set_group("params", std::move(params));
    ckpt::save(c, out);
    return c;
}

ckpt::Checkpoint train_stage1(const RunConfig& config, const Stage1Run& run, std::ostream* log) {
    const data::Manifest manifest = open_dataset(run.dataset);
    // Weak supervision: boxes and images only.
    const auto samples = load_split(manifest, data::Split::Train, false);
    const auto options = config.stage1_options();
    const auto schedule = config.stage1_schedule();
    const std::size_t total = schedule.total_steps(samples.size());
    const std::size_t per_epoch = schedule.steps_per_epoch(samples.size());
    const SgdOptions sgd_options{config.stage1.momentum, config.stage1.weight_decay};

    std::optional<triadic::Stage1State> state;
    std::uint64_t base_hash = 0;
    if (run.resume) {
        const auto c = load_kind(*run.resume, "stage1");
        if (c.config_hash != config.hash()) {
            throw std::runtime_error(run.resume->string() + ": written under config " + c.config_hash +
                                     ", current config is " + config.hash());
        }
        triadic::TriadicModels m{config.segmenter, c.group("anchor"), c.group("student"), c.group("teacher")};
        Sgd sgd(sgd_options);
        sgd.set_velocity(ckpt::to_map(c.group("velocity")));
        state.emplace(triadic::Stage1State{std::move(m), std::move(sgd), c.step});
        base_hash = ckpt::params_hash(state->models.anchor);
    } else {
        const auto base = load_kind(run.base, "base");
        state.emplace(triadic::Stage1State{triadic::make_models(base.group("params"), config.segmenter, config.seed),
                                           Sgd(sgd_options), 0});
        base_hash = ckpt::params_hash(state->models.anchor);
    }

    fs::create_directories(run.out_dir);
    const std::size_t stop = std::min(total, run.stop_step.value_or(total));
    triadic::train_stage1(*state, samples, options, schedule, stop, [&](const triadic::StepReport& r) {
        if (log != nullptr) {
            *log << "step=" << r.step << " epoch=" << r.step / per_epoch << " lr=" << fmt(r.lr)
                 << " dice=" << fmt(r.dice) << " anchor=" << fmt(r.anchor) << " gcl=" << fmt(r.gcl)
                 << " focal=" << fmt(r.focal) << " total=" << fmt(r.total) << " grad_norm=" << fmt(r.grad_norm)
                 << " gcl_instances=" << r.gcl_instances << " teacher_grad_free=" << r.teacher_grad_free
                 << " warnings=" << r.warnings.size() << '\n';
        }
        const std::size_t done = r.step + 1;
        const std::size_t epoch = done / per_epoch;
        if (done % per_epoch == 0 && epoch % config.stage1.checkpoint_every == 0) {
            auto snapshot = stage1_checkpoint(config, *state, total, base_hash);
            snapshot.step = done;
            ckpt::save(snapshot, run.out_dir / epoch_name(epoch));
        }
    });
    const auto c = stage1_checkpoint(config, *state, total, base_hash);
    if (state->step == total) {
        ckpt::save(c, run.out_dir / "final.ck");
    } else {
        ckpt::save(c, run.out_dir / ("step_" + std::to_string(state->step) + ".ck"));
    }
    return c;
}

LabelSource parse_label_source(const std::string& s) {
    if (s == "teacher") {
        return LabelSource::Teacher;
    }
    if (s == "student") {
        return LabelSource::Student;
    }
    if (s == "anchor") {
        return LabelSource::Anchor;
    }
    if (s == "boxfill") {
        return LabelSource::BoxFill;
    }
    throw std::invalid_argument("label source must be teacher, student, anchor or boxfill, got '" + s + "'");
}

std::string to_string(LabelSource s) {
    switch (s) {
        case LabelSource::Teacher:
            return "teacher";
        case LabelSource::Student:
            return "student";
        case LabelSource::Anchor:
            return "anchor";
        case LabelSource::BoxFill:
            return "boxfill";
    }
    return "unknown";
}

void make_pseudo(const RunConfig& config, const fs::path& checkpoint, const fs::path& dataset, data::Split split,
                 LabelSource source, const fs::path& out_dir) {
    const data::Manifest manifest = open_dataset(dataset);
    fs::create_directories(out_dir);
    std::map<std::string, std::string> meta{{"config_hash", config.hash()},
                                            {"source", to_string(source)},
                                            {"split", data::to_string(split)}};
    if (source == LabelSource::BoxFill) {
        const auto records = manifest.split(split);
        parallel_for(records.size(), config.workers, [&](std::size_t i) {
            const auto& r = *records[i];
            data::write_pgm(out_dir / (r.id + ".pgm"),
                            metrics::box_fill(r.boxes, manifest.params.height, manifest.params.width));
        });
    } else {
        const auto c = load_kind(checkpoint, "stage1");
        const ParameterSet& params = c.group(to_string(source));
        const bool fora_stages = c.meta_at("fora_stages") == "1";
        triadic::export_pseudo_labels(params, config.segmenter, manifest, split, out_dir, fora_stages, config.workers);
        meta["checkpoint_config_hash"] = c.config_hash;
        meta["params_hash"] = hex64(ckpt::params_hash(params));
    }
    write_meta(out_dir, meta);
}

ckpt::Checkpoint train_stage2(const RunConfig& config, const fs::path& dataset, const fs::path& label_dir,
                              const fs::path& out, std::ostream* log) {
    const data::Manifest manifest = open_dataset(dataset);
    const auto data = det::load_pseudo_labeled(manifest, data::Split::Train, label_dir);
    const auto options = config.stage2_options();
    ParameterSet params = det::train_stage2(config.detector, data, options, [&](const det::Stage2Step& s) {
        if (log != nullptr) {
            *log << "step=" << s.step << " t=" << fmt(s.t) << " alpha=" << fmt(s.alpha) << " lr=" << fmt(s.lr)
                 << " loss=" << fmt(s.loss) << '\n';
        }
    });
    ckpt::Checkpoint c;
    c.kind = "detector";
    c.config_hash = config.hash();
    c.step = options.epochs * ((data.size() + options.batch - 1) / options.batch);
    c.meta["with_msfa"] = options.with_msfa ? "1" : "0";
    c.meta["seed"] = std::to_string(options.seed);
    c.set_group("detector", std::move(params));
    ckpt::save(c, out);
    return c;
}

void predict(const RunConfig& config, const fs::path& detector, const fs::path& dataset, data::Split split,
             const fs::path& out_dir) {
    const data::Manifest manifest = open_dataset(dataset);
    const auto c = load_kind(detector, "detector");
    det::predict_split(c.group("detector"), config.detector, manifest, split, out_dir, c.meta_at("with_msfa") == "1",
                       config.workers);
    write_meta(out_dir, {{"config_hash", config.hash()},
                         {"detector_config_hash", c.config_hash},
                         {"split", data::to_string(split)}});
}

metrics::Report evaluate(const fs::path& pred_dir, const fs::path& dataset, data::Split split, std::size_t workers) {
    const data::Manifest manifest = open_dataset(dataset);
    std::vector<std::string> ids;
    for (const auto* r : manifest.split(split)) {
        ids.push_back(r->id);
    }
    return metrics::evaluate_ids(pred_dir, dataset / "gt", ids, workers);
}

}  // namespace wscod::pipeline
