// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wscod/gradsuite.hpp"
#include "wscod/hash.hpp"
#include "wscod/pipeline.hpp"

using namespace wscod;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> workers;
    std::vector<std::string> ablate;
};

RunConfig resolve(const Globals& g) {
    RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
    if (g.seed) {
        c.seed = *g.seed;
    }
    if (!g.out.empty()) {
        c.out = g.out;
    }
    if (g.workers) {
        c.workers = *g.workers;
    }
    for (const auto& a : g.ablate) {
        apply_ablation(c, a);
    }
    c.validate();
    return c;
}

fs::path or_default(const std::string& flag, const fs::path& fallback) { return flag.empty() ? fallback : fs::path(flag); }

std::ofstream open_log(const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error(path.string() + ": cannot open log");
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Box-supervised camouflaged object detection on synthetic data"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Run seed (gen-data: corpus seed)");
    app.add_option("--out", g.out, "Output root");
    app.add_option("--workers", g.workers, "Worker threads for export, prediction and eval")->check(CLI::PositiveNumber);
    app.add_option("--ablate", g.ablate, "Disable a component: fora, gcl or msfa")
        ->check(CLI::IsMember({"fora", "gcl", "msfa"}))
        ->take_all();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic corpus with manifest");
    std::optional<std::size_t> count;
    std::optional<std::size_t> size;
    std::optional<double> difficulty;
    std::string gen_root;
    gen->add_option("--count", count, "Number of samples");
    gen->add_option("--size", size, "Image side length");
    gen->add_option("--difficulty", difficulty, "Camouflage difficulty in [0, 1]");
    gen->add_option("--root", gen_root, "Dataset directory (default <out>/data)");

    // print-config
    auto* show = app.add_subcommand("print-config", "Print the effective configuration and its hash");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Supervised pretraining of the base model on a source corpus");
    std::string pre_out;
    pre->add_option("--checkpoint", pre_out, "Output checkpoint (default <out>/base.ck)");

    // train-stage1
    auto* s1 = app.add_subcommand("train-stage1", "Anchor/student/teacher self-training from box prompts");
    std::string s1_data, s1_base, s1_dir, s1_resume;
    std::optional<std::size_t> s1_stop;
    s1->add_option("--data", s1_data, "Dataset directory (default <out>/data)");
    s1->add_option("--base", s1_base, "Base checkpoint (default <out>/base.ck)");
    s1->add_option("--dir", s1_dir, "Checkpoint and log directory (default <out>/stage1)");
    s1->add_option("--resume", s1_resume, "Continue from a stage-1 checkpoint")->check(CLI::ExistingFile);
    s1->add_option("--stop-step", s1_stop, "Stop after this many steps in total");

    // make-pseudo
    auto* mp = app.add_subcommand("make-pseudo", "Export pseudo-labels for one split");
    std::string mp_ckpt, mp_data, mp_dest, mp_split = "train", mp_source = "teacher";
    mp->add_option("--checkpoint", mp_ckpt, "Stage-1 checkpoint (default <out>/stage1/final.ck)");
    mp->add_option("--data", mp_data, "Dataset directory (default <out>/data)");
    mp->add_option("--split", mp_split, "train or test")->check(CLI::IsMember({"train", "test"}));
    mp->add_option("--source", mp_source, "teacher, student, anchor or boxfill")
        ->check(CLI::IsMember({"teacher", "student", "anchor", "boxfill"}));
    mp->add_option("--dest", mp_dest, "Output directory (default <out>/pseudo/<source>/<split>)");

    // train-stage2
    auto* s2 = app.add_subcommand("train-stage2", "Train the prompt-free detector on pseudo-labels");
    std::string s2_data, s2_labels, s2_out, s2_log;
    s2->add_option("--data", s2_data, "Dataset directory (default <out>/data)");
    s2->add_option("--labels", s2_labels, "Pseudo-label directory (default <out>/pseudo/teacher/train)");
    s2->add_option("--checkpoint", s2_out, "Output checkpoint (default <out>/stage2/detector.ck)");

    // predict
    auto* pr = app.add_subcommand("predict", "Write detector probability maps for one split");
    std::string pr_ckpt, pr_data, pr_dest, pr_split = "test";
    pr->add_option("--checkpoint", pr_ckpt, "Detector checkpoint (default <out>/stage2/detector.ck)");
    pr->add_option("--data", pr_data, "Dataset directory (default <out>/data)");
    pr->add_option("--split", pr_split, "train or test")->check(CLI::IsMember({"train", "test"}));
    pr->add_option("--dest", pr_dest, "Output directory (default <out>/pred/<split>)");

    // eval
    auto* ev = app.add_subcommand("eval", "Score prediction maps against ground truth");
    std::string ev_pred, ev_gt, ev_data, ev_split, ev_report;
    ev->add_option("--pred", ev_pred, "Directory of <id>.pgm predictions")->required();
    ev->add_option("--gt", ev_gt, "Directory of <id>.pgm ground truth (exact file-set match)");
    ev->add_option("--data", ev_data, "Dataset directory; scores the ids of --split");
    ev->add_option("--split", ev_split, "train or test")->check(CLI::IsMember({"train", "test"}));
    ev->add_option("--report", ev_report, "Also write the report here");

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every differentiable op");
    std::string gc_scope = "all";
    std::size_t gc_trials = 4;
    std::uint64_t gc_seed = 2024;
    bool gc_corrupt = false;
    double gc_tol = 1e-5;
    gc->add_option("--scope", gc_scope, "all, primitive, fora, msfa, loss or gcl")
        ->check(CLI::IsMember({"all", "primitive", "fora", "msfa", "loss", "gcl"}));
    gc->add_option("--trials", gc_trials, "Random configurations per op")->check(CLI::PositiveNumber);
    gc->add_option("--check-seed", gc_seed, "Seed for the random configurations");
    gc->add_option("--tolerance", gc_tol, "Maximum relative error");
    gc->add_flag("--corrupt", gc_corrupt, "Include an op with a deliberately wrong adjoint");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto t0 = std::chrono::steady_clock::now();
        if (gen->parsed()) {
            RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
            if (!g.out.empty()) {
                c.out = g.out;
            }
            if (g.seed) {
                c.data.seed = *g.seed;
            }
            if (count) {
                c.data.count = *count;
            }
            if (size) {
                c.data.height = c.data.width = *size;
                c.segmenter.image = c.detector.image = *size;
            }
            if (difficulty) {
                c.data.difficulty = *difficulty;
            }
            c.data.validate();
            const fs::path root = or_default(gen_root, pipeline::layout(c).dataset());
            const auto m = pipeline::gen_data(c, root);
            std::cout << "root=" << root.string() << " samples=" << m.samples.size()
                      << " corpus_hash=" << hex64(data::directory_hash(root)) << '\n';
            return 0;
        }
        const RunConfig c = resolve(g);
        const auto paths = pipeline::layout(c);
        if (show->parsed()) {
            std::cout << c.to_json() << "\nconfig_hash=" << c.hash() << '\n';
        } else if (pre->parsed()) {
            const fs::path out = or_default(pre_out, paths.base());
            auto log = open_log(out.parent_path() / "pretrain.log");
            const auto ck = pipeline::pretrain(c, out, &log);
            std::cout << "checkpoint=" << out.string() << " steps=" << ck.step << " config_hash=" << c.hash()
                      << " seconds=" << seconds_since(t0) << '\n';
        } else if (s1->parsed()) {
            pipeline::Stage1Run run;
            run.dataset = or_default(s1_data, paths.dataset());
            run.base = or_default(s1_base, paths.base());
            run.out_dir = or_default(s1_dir, paths.stage1_dir());
            if (!s1_resume.empty()) {
                run.resume = s1_resume;
            }
            run.stop_step = s1_stop;
            auto log = open_log(run.out_dir / (run.resume ? "train.resumed.log" : "train.log"));
            const auto ck = pipeline::train_stage1(c, run, &log);
            std::cout << "dir=" << run.out_dir.string() << " step=" << ck.step
                      << " total_steps=" << ck.meta_at("total_steps") << " config_hash=" << c.hash()
                      << " seconds=" << seconds_since(t0) << '\n';
        } else if (mp->parsed()) {
            const auto split = data::parse_split(mp_split);
            const auto source = pipeline::parse_label_source(mp_source);
            const fs::path dest = or_default(mp_dest, paths.pseudo(mp_source, split));
            pipeline::make_pseudo(c, or_default(mp_ckpt, paths.stage1_final()), or_default(mp_data, paths.dataset()),
                                  split, source, dest);
            std::cout << "dest=" << dest.string() << " label_hash=" << hex64(data::directory_hash(dest)) << '\n';
        } else if (s2->parsed()) {
            const fs::path out = or_default(s2_out, paths.detector());
            auto log = open_log(out.parent_path() / "train.log");
            const auto ck = pipeline::train_stage2(
                c, or_default(s2_data, paths.dataset()),
                or_default(s2_labels, paths.pseudo("teacher", data::Split::Train)), out, &log);
            std::cout << "checkpoint=" << out.string() << " steps=" << ck.step << " with_msfa=" << ck.meta_at("with_msfa")
                      << " config_hash=" << c.hash() << " seconds=" << seconds_since(t0) << '\n';
        } else if (pr->parsed()) {
            const auto split = data::parse_split(pr_split);
            const fs::path dest = or_default(pr_dest, paths.predictions(split));
            pipeline::predict(c, or_default(pr_ckpt, paths.detector()), or_default(pr_data, paths.dataset()), split,
                              dest);
            std::cout << "dest=" << dest.string() << " prediction_hash=" << hex64(data::directory_hash(dest)) << '\n';
        } else if (ev->parsed()) {
            if (ev_gt.empty() == ev_data.empty()) {
                throw std::invalid_argument("eval needs exactly one of --gt or --data");
            }
            const auto report = ev_gt.empty()
                                    ? pipeline::evaluate(ev_pred, ev_data,
                                                         data::parse_split(ev_split.empty() ? "test" : ev_split),
                                                         c.workers)
                                    : metrics::evaluate_directories(ev_pred, ev_gt, c.workers);
            const std::string text = report.format();
            std::cout << text;
            if (!ev_report.empty()) {
                std::ofstream(ev_report, std::ios::trunc) << text;
            }
        } else if (gc->parsed()) {
            std::vector<gradcheck::Case> cases;
            for (auto& k : gradcheck::standard_cases()) {
                if (gc_scope == "all" || k.group == gc_scope) {
                    cases.push_back(std::move(k));
                }
            }
            if (gc_corrupt) {
                cases.push_back(gradcheck::corrupted_case());
            }
            const auto r = gradcheck::run_suite(cases, gc_seed, gc_trials);
            std::size_t failed = 0;
            for (const auto& k : r.cases) {
                const bool ok = k.max_rel_error <= gc_tol;
                failed += ok ? 0 : 1;
                std::cout << "op=" << k.name << " group=" << k.group << " configs=" << k.configs
                          << " max_rel_err=" << pipeline::fmt(k.max_rel_error) << " status=" << (ok ? "PASS" : "FAIL")
                          << '\n';
            }
            std::cout << "configs=" << r.configs << " max_rel_err=" << pipeline::fmt(r.max_rel_error)
                      << " failed=" << failed << " seconds=" << seconds_since(t0) << '\n';
            return failed == 0 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
