#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dynfire/checkpoint.hpp"
#include "dynfire/config.hpp"
#include "dynfire/eval.hpp"
#include "dynfire/simulator.hpp"
#include "dynfire/training.hpp"

namespace py = pybind11;
using namespace dynfire;

namespace {

py::array_t<float> to_numpy(const Tensor<float>& t) {
  py::array_t<float> out(t.shape());
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::string str_of(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "1" : "0";
  if (py::isinstance<py::float_>(v)) return format_double(v.cast<double>());
  return py::str(v).cast<std::string>();
}

KeyValues kwargs_to_kv(const py::kwargs& kw) {
  KeyValues kv;
  for (const auto& [k, v] : kw) kv[k.cast<std::string>()] = str_of(v);
  return kv;
}

HiddenState start_state(const Model& model, const Dataset& val, const std::optional<GridStack>& train_obs) {
  return train_obs ? carried_state(model, *train_obs) : model.initial_state(val.observations.week_of(0));
}

struct PyTrainResult {
  Model model;
  std::vector<LossRecord> history;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dynamic auto-encoder wildfire forecasting core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<UnsupportedVariantError>(m, "UnsupportedVariantError", PyExc_ValueError);
  py::register_exception<MetricError>(m, "MetricError", PyExc_ValueError);
  py::register_exception<ComparisonError>(m, "ComparisonError", PyExc_ValueError);
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def("variants", [] {
    std::vector<std::string> out;
    for (const auto v : all_variants()) out.push_back(to_string(v));
    return out;
  });

  py::class_<GridStack>(m, "GridStack")
      .def_property_readonly("frames", &GridStack::frames)
      .def_property_readonly("shape",
                             [](const GridStack& s) {
                               return py::make_tuple(s.frames(), s.header.channels, s.header.height, s.header.width);
                             })
      .def_property_readonly("first_week", [](const GridStack& s) { return s.header.first_week; })
      .def_property_readonly("channel_names", [](const GridStack& s) { return s.header.channel_names; })
      .def_property_readonly("fingerprint", &GridStack::fingerprint)
      .def("frame", [](const GridStack& s, std::size_t k) { return to_numpy(s.frame(k)); })
      .def("__eq__", [](const GridStack& a, const GridStack& b) { return a == b; });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("observations", &Dataset::observations)
      .def_readonly("fire", &Dataset::fire)
      .def_property_readonly("frames", &Dataset::frames);

  m.def("read_stack", &read_stack, py::arg("path"));
  m.def("write_stack", &write_stack, py::arg("stack"), py::arg("path"));
  m.def("load_dataset", &load_dataset, py::arg("obs_path"), py::arg("fire_path") = std::filesystem::path{});
  m.def(
      "temporal_split", [](const Dataset& d, double ratio) { return temporal_split(d, ratio); }, py::arg("dataset"),
      py::arg("ratio") = 0.70);

  m.def(
      "generate_dataset",
      [](std::size_t weeks, std::uint64_t seed, std::size_t height, std::size_t width, std::size_t channels,
         double dropout_p, double noise_sigma) {
        SimConfig c;
        c.height = height;
        c.width = width;
        c.channels = channels;
        c.dropout_p = dropout_p;
        c.noise_sigma = noise_sigma;
        return generate_dataset(c, weeks, seed);
      },
      py::arg("weeks") = 520, py::arg("seed") = 0, py::arg("height") = 16, py::arg("width") = 16,
      py::arg("channels") = 5, py::arg("dropout_p") = 0.5, py::arg("noise_sigma") = 0.05);

  m.def(
      "ttur_step_sizes",
      [](std::uint64_t n, const py::kwargs& kw) {
        TrainConfig c;
        apply_train_config(c, kwargs_to_kv(kw));
        return c.schedule.step_sizes(n);
      },
      py::arg("n"), "(eps_pred, eps_sys) at iteration n; schedule constants as keyword arguments");

  py::class_<Model>(m, "Model")
      .def_static(
          "initialize",
          [](const std::string& variant, std::uint64_t seed, const py::kwargs& kw) {
            TrainConfig c;
            apply_train_config(c, kwargs_to_kv(kw));
            return Model::initialize(parse_variant(variant), c.dims, seed);
          },
          py::arg("variant"), py::arg("seed") = 0)
      .def_static("load", &load_model, py::arg("path"))
      .def(
          "save", [](const Model& mdl, const std::filesystem::path& p) { save_model_checkpoint(mdl, p); },
          py::arg("path"))
      .def_property_readonly("variant", [](const Model& mdl) { return to_string(mdl.variant()); })
      .def_property_readonly("param_names", [](const Model& mdl) { return mdl.params().names(); })
      .def("param", [](const Model& mdl, const std::string& name) { return to_numpy(mdl.params().at(name)); })
      .def(
          "predict",
          [](const Model& mdl, const GridStack& obs) {
            return to_numpy(predict_ahead(mdl, obs, mdl.initial_state(obs.week_of(0))).grid);
          },
          py::arg("obs"), "fire risk T weeks after the last frame, from a cold state")
      .def(
          "decode_obs_after",
          [](const Model& mdl, const GridStack& obs) {
            HiddenState h = mdl.initial_state(obs.week_of(0));
            for (std::size_t k = 0; k < obs.frames(); ++k) h = mdl.assimilate(h, obs.observation(k));
            return to_numpy(mdl.decode_obs(h).grid);
          },
          py::arg("obs"));

  py::class_<PyTrainResult>(m, "TrainResult")
      .def_readonly("model", &PyTrainResult::model)
      .def_property_readonly("history", [](const PyTrainResult& r) {
        std::vector<std::tuple<std::uint64_t, double, double, double, double>> out;
        for (const auto& h : r.history) out.emplace_back(h.n, h.eps_pred, h.eps_sys, h.l_sys, h.l_pred);
        return out;
      });

  m.def(
      "train",
      [](const Dataset& data, const py::kwargs& kw) {
        TrainConfig c;
        c.dims.channels = data.observations.header.channels;
        c.dims.height = data.observations.header.height;
        c.dims.width = data.observations.header.width;
        apply_train_config(c, kwargs_to_kv(kw));
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train_run(c, data);
        }
        return PyTrainResult{r.state.model(), std::move(r.state.history)};
      },
      py::arg("dataset"), "train a model; settings as keyword arguments (variant, iterations, seed, ...)");

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("variant", &EvalReport::variant)
      .def_readonly("frames", &EvalReport::frames)
      .def_readonly("total_bce", &EvalReport::total_bce)
      .def_readonly("mean_pixel_bce", &EvalReport::mean_pixel_bce)
      .def_readonly("auroc", &EvalReport::auroc)
      .def_readonly("positive_rate", &EvalReport::positive_rate)
      .def_readonly("best", &EvalReport::best)
      .def_readonly("frame_bce", &EvalReport::frame_bce);

  m.def(
      "evaluate",
      [](const Model& mdl, const Dataset& val, std::optional<GridStack> train_obs, const std::string& mode) {
        if (mode != "online" && mode != "unrolled") throw ConfigError("mode must be 'online' or 'unrolled'");
        return evaluate_stream(mdl, val, start_state(mdl, val, train_obs),
                               mode == "online" ? EvalMode::online : EvalMode::unrolled);
      },
      py::arg("model"), py::arg("val"), py::arg("train_obs") = py::none(), py::arg("mode") = "online");

  m.def(
      "compare",
      [](std::vector<EvalReport> reports) {
        const Comparison c = compare_models(std::move(reports));
        return py::make_tuple(c.reports, report_csv(c.reports), comparison_table(c));
      },
      py::arg("reports"), "(flagged reports, csv, table)");

  m.def(
      "auroc",
      [](const std::vector<float>& scores, const std::vector<std::uint8_t>& labels) { return auroc(scores, labels); },
      py::arg("scores"), py::arg("labels"));
}
