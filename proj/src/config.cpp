// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <utility>

#include <json.hpp>

#include "wscod/hash.hpp"

namespace wscod {
namespace {

using json = nlohmann::json;

// One field list per section drives reading, writing and key checking.
template <class V, class P>
void generator_fields(V&& v, P& p) {
    v("count", p.count);
    v("height", p.height);
    v("width", p.width);
    v("difficulty", p.difficulty);
    v("seed", p.seed);
    v("test_fraction", p.test_fraction);
}

template <class V, class P>
void pretrain_fields(V&& v, P& p) {
    v("count", p.count);
    v("difficulty", p.difficulty);
    v("seed", p.seed);
    v("epochs", p.epochs);
    v("batch", p.batch);
    v("lr", p.lr);
}

template <class V, class P>
void segmenter_fields(V&& v, P& p) {
    v("image", p.image);
    v("patch", p.patch);
    v("dim", p.dim);
    v("blocks", p.blocks);
    v("mlp", p.mlp);
    v("rank", p.rank);
    v("decoder_hidden", p.decoder_hidden);
}

template <class V, class P>
void augment_fields(V&& v, P& p) {
    v("flip_probability", p.flip_probability);
    v("max_shift", p.max_shift);
    v("noise_std", p.noise_std);
    v("max_cutout_area", p.max_cutout_area);
    v("cutout_attempts", p.cutout_attempts);
}

template <class V, class P>
void stage1_fields(V&& v, P& p) {
    v("gamma", p.gamma);
    v("eps", p.eps);
    v("tau", p.tau);
    v("lambda_anchor", p.lambda_anchor);
    v("lambda_gcl", p.lambda_gcl);
    v("lambda_focal", p.lambda_focal);
    v("lambda_student", p.lambda_student);
    v("lambda_teacher", p.lambda_teacher);
    v("ema", p.ema);
    v("lr", p.lr);
    v("momentum", p.momentum);
    v("weight_decay", p.weight_decay);
    v("epochs", p.epochs);
    v("batch", p.batch);
    v("max_grad_norm", p.max_grad_norm);
    v("checkpoint_every", p.checkpoint_every);
    v.section("augment", p.augment, [](auto&& vv, auto& a) { augment_fields(vv, a); });
}

template <class V, class P>
void detector_fields(V&& v, P& p) {
    v("channels", p.channels);
    v("reduction", p.reduction);
}

template <class V, class P>
void stage2_fields(V&& v, P& p) {
    v("lr", p.lr);
    v("epochs", p.epochs);
    v("batch", p.batch);
    v("flip_probability", p.flip_probability);
}

template <class V, class P>
void ablation_fields(V&& v, P& p) {
    v("fora", p.fora);
    v("gcl", p.gcl);
    v("msfa", p.msfa);
}

template <class V, class P>
void run_fields(V&& v, P& c) {
    v.section("data", c.data, [](auto&& vv, auto& p) { generator_fields(vv, p); });
    v.section("pretrain", c.pretrain, [](auto&& vv, auto& p) { pretrain_fields(vv, p); });
    v.section("segmenter", c.segmenter, [](auto&& vv, auto& p) { segmenter_fields(vv, p); });
    v.section("stage1", c.stage1, [](auto&& vv, auto& p) { stage1_fields(vv, p); });
    v.section("detector", c.detector, [](auto&& vv, auto& p) { detector_fields(vv, p); });
    v.section("stage2", c.stage2, [](auto&& vv, auto& p) { stage2_fields(vv, p); });
    v.section("ablate", c.ablate, [](auto&& vv, auto& p) { ablation_fields(vv, p); });
    v("seed", c.seed);
    v("out", c.out);
    v("workers", c.workers);
}

class Writer {
public:
    explicit Writer(json& j) : j_(j) {}

    template <class T>
    void operator()(const char* key, const T& value) {
        j_[key] = value;
    }
    template <class P, class F>
    void section(const char* key, const P& p, F&& fields) {
        json sub = json::object();
        Writer w(sub);
        fields(w, p);
        j_[key] = std::move(sub);
    }

private:
    json& j_;
};

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw std::invalid_argument(where() + " must be a JSON object");
        }
    }
    /// Rejects keys no field asked for.
    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) {
                throw std::invalid_argument("unknown config key '" + (path_.empty() ? key : path_ + "." + key) + "'");
            }
        }
    }
    Reader(const Reader&) = delete;
    Reader& operator=(const Reader&) = delete;

    template <class T>
    void operator()(const char* key, T& value) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        const json& v = j_.at(key);
        const std::string name = path_.empty() ? key : path_ + "." + key;
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) {
                throw std::invalid_argument(name + " must be a boolean");
            }
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) {
                throw std::invalid_argument(name + " must be a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) {
                throw std::invalid_argument(name + " must be a number");
            }
        } else {
            if (!v.is_string()) {
                throw std::invalid_argument(name + " must be a string");
            }
        }
        value = v.get<T>();
    }
    template <class P, class F>
    void section(const char* key, P& p, F&& fields) {
        seen_.insert(key);
        if (j_.contains(key)) {
            Reader sub(j_.at(key), path_.empty() ? key : path_ + "." + key);
            fields(sub, p);
            sub.finish();
        }
    }

private:
    std::string where() const { return path_.empty() ? "config" : "config section '" + path_ + "'"; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw std::invalid_argument(what);
    }
}

bool unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void RunConfig::validate() const {
    data.validate();
    segmenter.validate();
    detector.validate();
    require(data.height == data.width, "data images must be square");
    require(segmenter.image == data.height, "segmenter.image must equal the data image size");
    require(detector.image == data.height, "detector image size must equal the data image size");
    require(pretrain.count > 0 && pretrain.epochs > 0 && pretrain.batch > 0, "pretrain count, epochs and batch must be positive");
    require(unit(pretrain.difficulty), "pretrain.difficulty must lie in [0, 1]");
    require(pretrain.lr > 0.0, "pretrain.lr must be positive");
    require(stage1.gamma >= 0.0, "stage1.gamma must be non-negative");
    require(stage1.eps > 0.0, "stage1.eps must be positive");
    require(stage1.tau > 0.0, "stage1.tau must be positive");
    require(stage1.lambda_anchor >= 0.0 && stage1.lambda_gcl >= 0.0 && stage1.lambda_focal >= 0.0,
            "stage1 loss weights must be non-negative");
    require(unit(stage1.lambda_student) && unit(stage1.lambda_teacher), "stage1 dice mixing weights must lie in [0, 1]");
    require(unit(stage1.ema), "stage1.ema must lie in [0, 1]");
    require(stage1.lr > 0.0, "stage1.lr must be positive");
    require(stage1.momentum >= 0.0 && stage1.momentum < 1.0, "stage1.momentum must lie in [0, 1)");
    require(stage1.weight_decay >= 0.0, "stage1.weight_decay must be non-negative");
    require(stage1.epochs > 0 && stage1.batch > 0, "stage1 epochs and batch must be positive");
    require(stage1.max_grad_norm >= 0.0, "stage1.max_grad_norm must be non-negative");
    require(stage1.checkpoint_every > 0, "stage1.checkpoint_every must be positive");
    require(unit(stage1.augment.flip_probability), "stage1.augment.flip_probability must lie in [0, 1]");
    require(stage1.augment.max_shift >= 0.0 && stage1.augment.max_shift < 0.5,
            "stage1.augment.max_shift must lie in [0, 0.5)");
    require(stage1.augment.noise_std >= 0.0, "stage1.augment.noise_std must be non-negative");
    require(unit(stage1.augment.max_cutout_area), "stage1.augment.max_cutout_area must lie in [0, 1]");
    require(stage2.lr > 0.0, "stage2.lr must be positive");
    require(stage2.epochs > 0 && stage2.batch > 0, "stage2 epochs and batch must be positive");
    require(unit(stage2.flip_probability), "stage2.flip_probability must lie in [0, 1]");
    require(!out.empty(), "out must not be empty");
    require(workers > 0, "workers must be positive");
}

std::string RunConfig::to_json() const {
    json j = json::object();
    Writer w(j);
    run_fields(w, *this);
    return j.dump(2);
}

std::string RunConfig::hash() const {
    RunConfig c = *this;
    c.out.clear();
    c.workers = 1;
    return hex64(fnv1a(c.to_json()));
}

triadic::Stage1Options RunConfig::stage1_options() const {
    triadic::Stage1Options o;
    o.gamma = stage1.gamma;
    o.eps = stage1.eps;
    o.tau = stage1.tau;
    o.weights.anchor = stage1.lambda_anchor;
    o.weights.gcl = ablate.gcl ? 0.0 : stage1.lambda_gcl;
    o.weights.focal = stage1.lambda_focal;
    o.lambda_student = stage1.lambda_student;
    o.lambda_teacher = stage1.lambda_teacher;
    o.ema = stage1.ema;
    o.max_grad_norm = stage1.max_grad_norm;
    o.fora_stages = !ablate.fora;
    o.augment = stage1.augment;
    return o;
}

triadic::Schedule RunConfig::stage1_schedule() const {
    return triadic::Schedule{stage1.epochs, stage1.batch, stage1.lr, seed};
}

det::Stage2Options RunConfig::stage2_options() const {
    det::Stage2Options o;
    o.epochs = stage2.epochs;
    o.batch = stage2.batch;
    o.lr = stage2.lr;
    o.seed = seed;
    o.with_msfa = !ablate.msfa;
    o.flip_probability = stage2.flip_probability;
    return o;
}

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    Reader reader(j, "");
    run_fields(reader, c);
    reader.finish();
    c.detector.image = c.data.height;
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(path.string() + ": cannot open config");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

void apply_ablation(RunConfig& config, const std::string& component) {
    if (component == "fora") {
        config.ablate.fora = true;
    } else if (component == "gcl") {
        config.ablate.gcl = true;
    } else if (component == "msfa") {
        config.ablate.msfa = true;
    } else {
        throw std::invalid_argument("--ablate expects fora, gcl or msfa, got '" + component + "'");
    }
}

}  // namespace wscod
