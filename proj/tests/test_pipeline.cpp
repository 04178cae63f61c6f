// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "wscod/hash.hpp"
#include "wscod/pipeline.hpp"

using namespace wscod;
using namespace wscod::pipeline;

namespace {

using Record = std::map<std::string, std::string>;

std::vector<Record> parse_log(const std::string& text) {
    std::vector<Record> out;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        Record r;
        std::istringstream fields(line);
        std::string kv;
        while (fields >> kv) {
            const auto eq = kv.find('=');
            r[kv.substr(0, eq)] = kv.substr(eq + 1);
        }
        out.push_back(std::move(r));
    }
    return out;
}

double num(const Record& r, const std::string& key) { return std::stod(r.at(key)); }

double max_abs_diff(const ParameterSet& a, const ParameterSet& b) {
    EXPECT_TRUE(a.same_layout(b));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a.entries()[i].value.data;
        const auto& y = b.entries()[i].value.data;
        for (std::size_t k = 0; k < x.size(); ++k) {
            worst = std::max(worst, std::abs(x[k] - y[k]));
        }
    }
    return worst;
}

RunConfig tiny(const fs::path& out) {
    RunConfig c;
    c.data.count = 12;
    c.data.height = c.data.width = 32;
    c.pretrain.count = 8;
    c.pretrain.epochs = 1;
    c.pretrain.batch = 4;
    c.segmenter.image = 32;
    c.segmenter.patch = 4;
    c.segmenter.dim = 16;
    c.segmenter.blocks = 1;
    c.segmenter.mlp = 16;
    c.segmenter.rank = 2;
    c.segmenter.decoder_hidden = 8;
    c.stage1.epochs = 2;
    c.stage1.batch = 4;
    c.detector.image = 32;
    c.detector.channels = 4;
    c.stage2.epochs = 2;
    c.stage2.batch = 4;
    c.out = out.string();
    c.validate();
    return c;
}

class Pipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / "wscod_test_pipeline";
        fs::remove_all(root_);
        const RunConfig c = tiny(root_);
        gen_data(c, layout(c).dataset());
        pretrain(c, layout(c).base(), nullptr);
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static RunConfig config() { return tiny(root_); }
    static Layout paths() { return layout(config()); }

    static Stage1Run run_in(const std::string& name) {
        return Stage1Run{paths().dataset(), paths().base(), root_ / name, std::nullopt, std::nullopt};
    }

    static fs::path root_;
};

fs::path Pipeline::root_;

}  // namespace

TEST_F(Pipeline, ResumedRunMatchesUninterruptedRun) {
    const RunConfig c = config();
    std::ostringstream full_log;
    const auto full = train_stage1(c, run_in("s1_full"), &full_log);
    EXPECT_EQ(full.step, 6u);

    Stage1Run first = run_in("s1_split");
    first.stop_step = 2;
    std::ostringstream first_log;
    const auto partial = train_stage1(c, first, &first_log);
    EXPECT_EQ(partial.step, 2u);
    ASSERT_TRUE(fs::exists(first.out_dir / "step_2.ck"));
    EXPECT_FALSE(fs::exists(first.out_dir / "final.ck"));

    Stage1Run second = run_in("s1_split");
    second.resume = first.out_dir / "step_2.ck";
    std::ostringstream second_log;
    const auto resumed = train_stage1(c, second, &second_log);
    EXPECT_EQ(resumed.step, 6u);

    for (const char* group : {"anchor", "student", "teacher", "velocity"}) {
        EXPECT_LE(max_abs_diff(full.group(group), resumed.group(group)), 1e-9) << group;
    }
    const auto a = parse_log(full_log.str());
    auto b = parse_log(first_log.str());
    const auto tail = parse_log(second_log.str());
    b.insert(b.end(), tail.begin(), tail.end());
    ASSERT_EQ(a.size(), 6u);
    ASSERT_EQ(b.size(), 6u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].at("step"), std::to_string(i));
        EXPECT_EQ(b[i].at("step"), std::to_string(i));
        EXPECT_NEAR(num(a[i], "total"), num(b[i], "total"), 1e-9) << "step " << i;
    }
}

TEST_F(Pipeline, AnchorStaysFixedAcrossCheckpoints) {
    const RunConfig c = config();
    const Stage1Run run = run_in("s1_anchor");
    std::ostringstream log;
    train_stage1(c, run, &log);
    const auto names = {"epoch_001.ck", "epoch_002.ck", "final.ck"};
    std::set<std::uint64_t> hashes;
    std::set<std::uint64_t> student_hashes;
    for (const auto* name : names) {
        const auto ck = ckpt::load(run.out_dir / name);
        EXPECT_EQ(ck.kind, "stage1");
        EXPECT_EQ(ck.config_hash, c.hash());
        hashes.insert(ckpt::params_hash(ck.group("anchor")));
        student_hashes.insert(ckpt::params_hash(ck.group("student")));
        EXPECT_EQ(ck.meta_at("base_hash"), hex64(ckpt::params_hash(ck.group("anchor"))));
    }
    EXPECT_EQ(hashes.size(), 1u);
    EXPECT_EQ(student_hashes.size(), 2u);  // final equals the last epoch
    for (const auto& r : parse_log(log.str())) {
        EXPECT_EQ(r.at("teacher_grad_free"), "1");
    }
}

TEST_F(Pipeline, ContrastWeightOnlyMattersAfterTheFirstUpdate) {
    RunConfig with = config();
    RunConfig without = with;
    without.stage1.lambda_gcl = 0.0;
    Stage1Run a = run_in("s1_gcl_on");
    Stage1Run b = run_in("s1_gcl_off");
    a.stop_step = b.stop_step = 2;
    std::ostringstream la;
    std::ostringstream lb;
    train_stage1(with, a, &la);
    train_stage1(without, b, &lb);
    const auto ra = parse_log(la.str());
    const auto rb = parse_log(lb.str());
    ASSERT_EQ(ra.size(), 2u);
    ASSERT_EQ(rb.size(), 2u);
    for (const char* key : {"dice", "anchor", "focal"}) {
        EXPECT_EQ(ra[0].at(key), rb[0].at(key)) << key;
    }
    EXPECT_GT(num(ra[0], "gcl"), 0.0);
    EXPECT_NE(ra[0].at("total"), rb[0].at("total"));
    EXPECT_NE(ra[1].at("dice"), rb[1].at("dice"));
}

TEST_F(Pipeline, ResumeRefusesAnotherConfig) {
    const RunConfig c = config();
    Stage1Run run = run_in("s1_refuse");
    run.stop_step = 1;
    train_stage1(c, run, nullptr);
    RunConfig other = c;
    other.stage1.lr = 1e-3;
    Stage1Run again = run;
    again.resume = run.out_dir / "step_1.ck";
    again.stop_step.reset();
    EXPECT_THROW(train_stage1(other, again, nullptr), std::runtime_error);
    Stage1Run wrong_kind = run_in("s1_refuse");
    wrong_kind.resume = paths().base();
    EXPECT_THROW(train_stage1(c, wrong_kind, nullptr), std::runtime_error);
}

TEST_F(Pipeline, StageOneReadsNoMasks) {
    Stage1Run run = run_in("s1_audit");
    run.stop_step = 1;
    data::FileAudit::begin();
    train_stage1(config(), run, nullptr);
    const auto seen = data::FileAudit::end();
    ASSERT_FALSE(seen.empty());
    for (const auto& p : seen) {
        const bool image = p.find("images") != std::string::npos;
        EXPECT_TRUE(image || p.ends_with(data::kManifestName)) << p;
    }
}

TEST_F(Pipeline, PseudoLabelExportIsByteIdentical) {
    RunConfig c = config();
    Stage1Run run = run_in("s1_export");
    train_stage1(c, run, nullptr);
    const fs::path one = root_ / "pseudo_one";
    const fs::path two = root_ / "pseudo_two";
    make_pseudo(c, run.out_dir / "final.ck", paths().dataset(), data::Split::Train, LabelSource::Teacher, one);
    c.workers = 3;
    make_pseudo(c, run.out_dir / "final.ck", paths().dataset(), data::Split::Train, LabelSource::Teacher, two);
    EXPECT_EQ(data::directory_hash(one), data::directory_hash(two));
    const auto manifest = data::load_manifest(paths().dataset());
    EXPECT_EQ(std::distance(fs::directory_iterator(one), fs::directory_iterator{}),
              static_cast<std::ptrdiff_t>(manifest.split(data::Split::Train).size() + 1));
    EXPECT_TRUE(fs::exists(one / "meta.txt"));
}

TEST_F(Pipeline, StageTwoFollowsCosineScheduleAndReadsOnlyImagesAndLabels) {
    const RunConfig c = config();
    const fs::path labels = root_ / "boxfill_train";
    make_pseudo(c, "", paths().dataset(), data::Split::Train, LabelSource::BoxFill, labels);
    std::ostringstream log;
    data::FileAudit::begin();
    const auto ck = train_stage2(c, paths().dataset(), labels, root_ / "det" / "detector.ck", &log);
    const auto seen = data::FileAudit::end();
    for (const auto& p : seen) {
        const bool image = p.find("images") != std::string::npos;
        const bool label = p.find("boxfill_train") != std::string::npos;
        EXPECT_TRUE(image || label || p.ends_with(data::kManifestName)) << p;
        EXPECT_EQ(p.find("/gt/"), std::string::npos) << p;
        EXPECT_EQ(p.find("/masks/"), std::string::npos) << p;
    }
    const auto records = parse_log(log.str());
    // 10 train images, batch 4, 2 epochs
    ASSERT_EQ(records.size(), 6u);
    EXPECT_EQ(ck.step, 6u);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const double t = num(records[i], "t");
        EXPECT_NEAR(t, static_cast<double>(i) / 6.0, 1e-15);
        EXPECT_NEAR(num(records[i], "alpha"), std::cos(std::numbers::pi * t / 2.0), 1e-12);
    }
}

TEST_F(Pipeline, PredictAndEvaluate) {
    const RunConfig c = config();
    const fs::path labels = root_ / "boxfill_eval";
    make_pseudo(c, "", paths().dataset(), data::Split::Train, LabelSource::BoxFill, labels);
    const fs::path det = root_ / "det_eval" / "detector.ck";
    train_stage2(c, paths().dataset(), labels, det, nullptr);
    const fs::path pred = root_ / "pred_eval";
    predict(c, det, paths().dataset(), data::Split::Test, pred);
    const auto report = evaluate(pred, paths().dataset(), data::Split::Test, 1);
    EXPECT_EQ(report.samples.size(), 2u);
    EXPECT_GE(report.miou, 0.0);
    EXPECT_LE(report.miou, 1.0);
    EXPECT_THROW(predict(c, paths().base(), paths().dataset(), data::Split::Test, pred), std::runtime_error);
}

TEST_F(Pipeline, EvaluatingGroundTruthAgainstItselfIsPerfect) {
    const auto report = evaluate(paths().dataset() / "gt", paths().dataset(), data::Split::Test, 2);
    EXPECT_EQ(report.mae, 0.0);
    EXPECT_EQ(report.miou, 1.0);
    EXPECT_EQ(report.mf1, 1.0);
}

TEST_F(Pipeline, MissingPredictionIsAnError) {
    const fs::path pred = root_ / "pred_missing";
    fs::create_directories(pred);
    const auto manifest = data::load_manifest(paths().dataset());
    const auto test = manifest.split(data::Split::Test);
    for (const auto* r : test) {
        fs::copy_file(paths().dataset() / "gt" / (r->id + ".pgm"), pred / (r->id + ".pgm"));
    }
    fs::remove(pred / (test.front()->id + ".pgm"));
    try {
        (void)evaluate(pred, paths().dataset(), data::Split::Test, 1);
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find(test.front()->id), std::string::npos);
    }
}

TEST_F(Pipeline, MissingDatasetNamesGenData) {
    try {
        (void)evaluate(root_, root_ / "nowhere", data::Split::Test, 1);
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("gen-data"), std::string::npos);
    }
}
