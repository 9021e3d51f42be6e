#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "eagle/app.hpp"
#include "eagle/error.hpp"
#include "eagle/survival.hpp"
#include "eagle/training.hpp"

namespace py = pybind11;
using namespace eagle;


PYBIND11_MODULE(_eagle, m) {
  m.doc() = "EAGLE multimodal survival core";

  py::register_exception<Error>(m, "EagleError", PyExc_RuntimeError);

  m.def("c_index", [](const std::vector<double>& r, const std::vector<double>& t, const std::vector<int>& e) {
    return c_index(r, t, e);
  }, py::arg("risks"), py::arg("times"), py::arg("events"));

  m.def("cox_loss", [](const std::vector<double>& r, const std::vector<double>& t, const std::vector<int>& e) {
    return cox_loss(r, t, e);
  }, py::arg("risks"), py::arg("times"), py::arg("events"));

  m.def("kaplan_meier", [](const std::vector<double>& t, const std::vector<int>& e) {
    const KMCurve c = kaplan_meier(t, e);
    py::dict d;
    d["time"] = c.time;
    d["survival"] = c.survival;
    d["at_risk"] = c.at_risk;
    d["events"] = c.events;
    return d;
  }, py::arg("times"), py::arg("events"));

  m.def("log_rank", [](const std::vector<std::pair<std::vector<double>, std::vector<int>>>& groups) {
    std::vector<SurvivalGroup> g;
    for (const auto& [t, e] : groups) g.push_back({t, e});
    const LogRankResult r = log_rank(g);
    py::dict d;
    d["statistic"] = r.statistic;
    d["df"] = r.df;
    d["p_value"] = r.p_value;
    d["observed"] = r.observed;
    d["expected"] = r.expected;
    return d;
  }, py::arg("groups"), "groups: list of (times, events)");

  m.def("chi_square_sf", &chi_square_sf, py::arg("x"), py::arg("df"));

  m.def("tertile_stratify", [](const std::vector<double>& risks, const std::vector<std::string>& ids) {
    const Stratification s = tertile_stratify(risks, ids);
    std::vector<std::string> labels;
    for (auto l : s.level_of) labels.push_back(risk_level_name(l));
    py::dict d;
    d["low_cutoff"] = s.low_cutoff;
    d["high_cutoff"] = s.high_cutoff;
    d["labels"] = labels;
    d["warnings"] = s.warnings;
    return d;
  }, py::arg("risks"), py::arg("ids"));

  m.def("reduction_ratio", [](std::size_t imaging, std::size_t text, std::size_t clinical, const std::string& preset) {
    ModelConfig cfg = app::find_preset(preset).model;
    cfg.input_dims = {imaging, text, clinical};
    const ReductionReport r = count_params(cfg);
    py::dict d;
    d["param_count"] = r.param_count;
    d["input_total"] = r.input_total;
    d["final_dim"] = r.final_dim;
    d["reduction_ratio"] = r.reduction_ratio;
    return d;
  }, py::arg("imaging"), py::arg("text"), py::arg("clinical"), py::arg("preset") = "gbm");

  m.def("preset_table", &app::preset_table);

  m.def("synth", [](const std::string& out, std::size_t n, double signal, std::uint64_t seed,
                    const std::vector<std::string>& signal_modalities) {
    SynthConfig cfg;
    cfg.n = n;
    cfg.signal_strength = signal;
    cfg.seed = seed;
    cfg.signal_modalities.clear();
    for (const auto& s : signal_modalities) cfg.signal_modalities.push_back(parse_modality(s));
    const auto r = app::run_synth(cfg, out);
    py::dict d;
    d["manifest"] = r.manifest.string();
    d["ground_truth_cindex"] = r.ground_truth_cindex;
    return d;
  }, py::arg("out"), py::arg("n") = 400, py::arg("signal") = 2.0, py::arg("seed") = 0,
     py::arg("signal_modalities") = std::vector<std::string>{"imaging", "text", "clinical"});

  m.def("train", [](const std::string& manifest, const std::string& out, const std::string& preset, std::size_t k,
                    std::uint64_t seed, std::optional<std::string> config) {
    std::optional<std::filesystem::path> cp;
    if (config) cp = *config;
    const auto cfg = app::resolve_config(preset, cp, seed, k);
    app::TrainResult r;
    {
      py::gil_scoped_release release;
      r = app::run_train(manifest, cfg, out, false);
    }
    py::dict d;
    d["cindex_per_fold"] = r.cv.cindex_per_fold;
    d["cindex_mean"] = r.cv.cindex_mean;
    d["cindex_std"] = r.cv.cindex_std;
    d["oof_risk"] = r.cv.oof_risk;
    d["reduction_ratio"] = r.reduction_ratio;
    d["logrank_p"] = r.report.logrank ? py::cast(r.report.logrank->p_value) : py::none();
    return d;
  }, py::arg("manifest"), py::arg("out"), py::arg("preset") = "custom", py::arg("k") = 5, py::arg("seed") = 0,
     py::arg("config") = py::none());

  m.def("evaluate", [](const std::string& manifest, const std::string& run_dir) {
    const SurvivalReport r = app::run_evaluate(manifest, run_dir);
    py::dict d;
    d["cindex"] = r.cindex;
    std::vector<py::object> med;
    for (const auto& v : r.median_survival) med.push_back(v ? py::cast(*v) : py::none());
    d["median_survival"] = med;
    d["logrank_p"] = r.logrank ? py::cast(r.logrank->p_value) : py::none();
    return d;
  }, py::arg("manifest"), py::arg("run_dir"));

  m.def("attribute", [](const std::string& manifest, const std::string& run_dir, const std::string& methods,
                        std::size_t steps) {
    const auto res = app::run_attribute(manifest, run_dir, app::parse_methods(methods), steps);
    py::dict d;
    for (const auto& ca : res) {
      py::dict means;
      for (Modality mod : kModalities) means[py::str(std::string(modality_name(mod)))] = ca.summary[index_of(mod)].mean;
      d[py::str(std::string(method_name(ca.method)))] = means;
    }
    return d;
  }, py::arg("manifest"), py::arg("run_dir"), py::arg("methods") = "all", py::arg("steps") = kDefaultIgSteps);
}
