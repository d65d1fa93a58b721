// Python bindings over the main pipeline operations plus a few pure
// computational helpers that are convenient to sanity-check from Python.

#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "edbench/eval.hpp"
#include "edbench/features.hpp"
#include "edbench/labels.hpp"
#include "edbench/pipeline.hpp"
#include "edbench/synthgen.hpp"

namespace py = pybind11;

namespace {

edbench::pipeline::ExperimentConfig load_config(const std::string& path,
                                                const std::optional<std::string>& scenario,
                                                const std::optional<std::string>& profile,
                                                const std::optional<std::uint64_t>& seed) {
    auto config = edbench::pipeline::ExperimentConfig::load(path);
    if (scenario) config.scenario = *scenario;
    if (profile) config.profile = *profile;
    if (seed) config.seed = *seed;
    return config;
}

}  // namespace

PYBIND11_MODULE(_edbench, m) {
    m.doc() = "Emergency-department prediction benchmark pipeline";
    m.attr("__version__") = "0.1.0";

    py::register_exception<edbench::UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<edbench::DataError>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<edbench::DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    m.def(
        "fixture",
        [](const std::string& out_dir, int n_patients, std::uint64_t seed, double sampling_rate) {
            edbench::synthgen::SynthConfig config;
            config.n_patients = n_patients;
            config.seed = seed;
            config.sampling_rate = sampling_rate;
            config.validate();
            edbench::synthgen::generate_fixture(config, out_dir);
        },
        py::arg("out_dir"), py::arg("n_patients") = 500, py::arg("seed") = 1,
        py::arg("sampling_rate") = 100.0,
        "Generate a synthetic source-data fixture directory.");

    m.def(
        "build",
        [](const std::string& config_path) {
            edbench::pipeline::cmd_build(edbench::pipeline::ExperimentConfig::load(config_path));
        },
        py::arg("config_path"), "Build dataset artifacts from source tables.");

    m.def(
        "train",
        [](const std::string& config_path, const std::optional<std::string>& scenario,
           const std::optional<std::string>& profile, const std::optional<std::uint64_t>& seed) {
            return edbench::pipeline::cmd_train(load_config(config_path, scenario, profile, seed));
        },
        py::arg("config_path"), py::arg("scenario") = std::nullopt,
        py::arg("profile") = std::nullopt, py::arg("seed") = std::nullopt,
        py::call_guard<py::gil_scoped_release>(),
        "Train the configured scenario; returns the checkpoint path.");

    m.def(
        "evaluate",
        [](const std::string& config_path, const std::string& checkpoint,
           const std::optional<std::string>& scenario, const std::optional<std::uint64_t>& seed) {
            return edbench::pipeline::cmd_eval(
                load_config(config_path, scenario, std::nullopt, seed), checkpoint);
        },
        py::arg("config_path"), py::arg("checkpoint") = std::string(),
        py::arg("scenario") = std::nullopt, py::arg("seed") = std::nullopt,
        py::call_guard<py::gil_scoped_release>(),
        "Evaluate a checkpoint on the test fold; returns the report JSON path.");

    m.def(
        "report",
        [](const std::vector<std::string>& report_paths, const std::string& out_prefix,
           const std::string& config_path) {
            edbench::pipeline::cmd_report(report_paths, out_prefix,
                                          edbench::pipeline::ExperimentConfig::load(config_path));
        },
        py::arg("report_paths"), py::arg("out_prefix"), py::arg("config_path"),
        "Write a comparison table across evaluation reports.");

    m.def(
        "auroc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            return edbench::eval::auroc(scores, labels);
        },
        py::arg("scores"), py::arg("labels"),
        "Mann-Whitney AUROC with tie handling; raises on single-class input.");

    m.def(
        "trend_statistics",
        [](const std::vector<double>& minutes, const std::vector<double>& values) {
            if (minutes.size() != values.size()) {
                throw edbench::UsageError("minutes and values must have equal length");
            }
            std::vector<std::pair<double, double>> series;
            series.reserve(minutes.size());
            for (std::size_t i = 0; i < minutes.size(); ++i) {
                series.emplace_back(minutes[i], values[i]);
            }
            auto agg = edbench::features::aggregate_trends(series);
            py::dict out;
            const auto& names = edbench::features::trend_stat_names();
            auto vals = agg.as_vector();
            for (std::size_t i = 0; i < names.size(); ++i) {
                out[py::str(names[i])] = vals[i];
            }
            return out;
        },
        py::arg("minutes"), py::arg("values"),
        "Nine window statistics of one measurement series.");

    m.def(
        "propagate_code",
        [](const std::string& code) {
            auto s = edbench::labels::truncate_and_propagate(code);
            return std::vector<std::string>(s.begin(), s.end());
        },
        py::arg("code"), "Truncate an ICD-10 code to 5 characters and add 3+-char prefixes.");

    m.def("relative_improvement", &edbench::eval::relative_improvement, py::arg("a"), py::arg("b"),
          "100 * (a - b) / b, rounded to two decimals.");
}
