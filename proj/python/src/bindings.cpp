// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "wscod/gradsuite.hpp"
#include "wscod/hash.hpp"
#include "wscod/pipeline.hpp"

namespace py = pybind11;
using namespace wscod;

namespace {

py::array_t<double> to_numpy(const Array& a) {
    std::vector<py::ssize_t> shape(a.shape.begin(), a.shape.end());
    py::array_t<double> out(shape);
    std::copy(a.data.begin(), a.data.end(), out.mutable_data());
    return out;
}

Array from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Array(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict report_dict(const metrics::Report& r) {
    py::dict d;
    d["mae"] = r.mae;
    d["miou"] = r.miou;
    d["mf1"] = r.mf1;
    py::list samples;
    for (const auto& s : r.samples) {
        py::dict row;
        row["id"] = s.id;
        row["mae"] = s.mae;
        row["iou"] = s.iou;
        row["f1"] = s.f1;
        samples.append(row);
    }
    d["samples"] = samples;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of wscod";

    py::class_<RunConfig>(m, "Config")
        .def(py::init<>())
        .def_static("from_json", &parse_config, py::arg("text"))
        .def_static("load", [](const std::filesystem::path& p) { return load_config(p); }, py::arg("path"))
        .def("to_json", &RunConfig::to_json)
        .def("hash", &RunConfig::hash)
        .def("validate", &RunConfig::validate)
        .def("ablate", [](RunConfig& c, const std::string& what) { apply_ablation(c, what); }, py::arg("component"))
        .def_readwrite("seed", &RunConfig::seed)
        .def_readwrite("out", &RunConfig::out)
        .def_readwrite("workers", &RunConfig::workers)
        .def("__repr__", [](const RunConfig& c) { return "<wscod.Config " + c.hash() + ">"; });

    py::enum_<data::Split>(m, "Split").value("TRAIN", data::Split::Train).value("TEST", data::Split::Test);

    m.def("read_pgm", [](const std::filesystem::path& p) { return to_numpy(data::read_pgm(p)); }, py::arg("path"));
    m.def("read_ppm", [](const std::filesystem::path& p) { return to_numpy(data::read_ppm(p)); }, py::arg("path"));
    m.def(
        "write_pgm", [](const std::filesystem::path& p, const py::array_t<double>& a) { data::write_pgm(p, from_numpy(a)); },
        py::arg("path"), py::arg("array"));
    m.def(
        "directory_hash", [](const std::filesystem::path& p) { return hex64(data::directory_hash(p)); },
        py::arg("root"));

    m.def(
        "generate_sample",
        [](std::size_t index, std::size_t size, double difficulty, std::uint64_t seed) {
            data::GeneratorParams gp;
            gp.height = gp.width = size;
            gp.difficulty = difficulty;
            gp.seed = seed;
            gp.validate();
            const auto s = data::generate_sample(gp, index);
            py::list masks;
            for (const auto& mask : s.masks) {
                masks.append(to_numpy(mask));
            }
            py::list boxes;
            for (const auto& b : s.boxes) {
                boxes.append(py::make_tuple(b.row0, b.col0, b.row1, b.col1));
            }
            py::dict d;
            d["image"] = to_numpy(s.image);
            d["masks"] = masks;
            d["boxes"] = boxes;
            return d;
        },
        py::arg("index"), py::arg("size") = 64, py::arg("difficulty") = 0.5, py::arg("seed") = 0);

    m.def(
        "gen_data", [](const RunConfig& c, const std::filesystem::path& root) { pipeline::gen_data(c, root); },
        py::arg("config"), py::arg("root"));
    m.def(
        "pretrain",
        [](const RunConfig& c, const std::filesystem::path& out) {
            std::ostringstream log;
            pipeline::pretrain(c, out, &log);
            return log.str();
        },
        py::arg("config"), py::arg("out"));
    m.def(
        "train_stage1",
        [](const RunConfig& c, const std::filesystem::path& dataset, const std::filesystem::path& base,
           const std::filesystem::path& out_dir, std::optional<std::filesystem::path> resume,
           std::optional<std::size_t> stop_step) {
            std::ostringstream log;
            pipeline::train_stage1(c, pipeline::Stage1Run{dataset, base, out_dir, resume, stop_step}, &log);
            return log.str();
        },
        py::arg("config"), py::arg("dataset"), py::arg("base"), py::arg("out_dir"), py::arg("resume") = py::none(),
        py::arg("stop_step") = py::none());
    m.def(
        "make_pseudo",
        [](const RunConfig& c, const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
           data::Split split, const std::string& source, const std::filesystem::path& out_dir) {
            pipeline::make_pseudo(c, checkpoint, dataset, split, pipeline::parse_label_source(source), out_dir);
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("dataset"), py::arg("split"), py::arg("source"),
        py::arg("out_dir"));
    m.def(
        "train_stage2",
        [](const RunConfig& c, const std::filesystem::path& dataset, const std::filesystem::path& labels,
           const std::filesystem::path& out) {
            std::ostringstream log;
            pipeline::train_stage2(c, dataset, labels, out, &log);
            return log.str();
        },
        py::arg("config"), py::arg("dataset"), py::arg("labels"), py::arg("out"));
    m.def("predict", &pipeline::predict, py::arg("config"), py::arg("detector"), py::arg("dataset"), py::arg("split"),
          py::arg("out_dir"));
    m.def(
        "evaluate",
        [](const std::filesystem::path& pred, const std::filesystem::path& dataset, data::Split split,
           std::size_t workers) { return report_dict(pipeline::evaluate(pred, dataset, split, workers)); },
        py::arg("pred_dir"), py::arg("dataset"), py::arg("split") = data::Split::Test, py::arg("workers") = 1);
    m.def(
        "evaluate_directories",
        [](const std::filesystem::path& pred, const std::filesystem::path& gt, std::size_t workers) {
            return report_dict(metrics::evaluate_directories(pred, gt, workers));
        },
        py::arg("pred_dir"), py::arg("gt_dir"), py::arg("workers") = 1);

    m.def(
        "grad_check",
        [](std::uint64_t seed, std::size_t trials, bool corrupt) {
            auto cases = gradcheck::standard_cases();
            if (corrupt) {
                cases.push_back(gradcheck::corrupted_case());
            }
            const auto r = gradcheck::run_suite(cases, seed, trials);
            py::list out;
            for (const auto& k : r.cases) {
                py::dict d;
                d["op"] = k.name;
                d["group"] = k.group;
                d["configs"] = k.configs;
                d["max_rel_error"] = k.max_rel_error;
                out.append(d);
            }
            return out;
        },
        py::arg("seed") = 2024, py::arg("trials") = 4, py::arg("corrupt") = false);
}
