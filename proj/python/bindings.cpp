#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lemo/cli.hpp"
#include "lemo/engine.hpp"
#include "lemo/feature_io.hpp"
#include "lemo/metrics.hpp"
#include "lemo/synth.hpp"

namespace py = pybind11;
using namespace lemo;

namespace {

using FArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FArray to_numpy(const std::vector<std::size_t>& shape, const std::vector<float>& data) {
  FArray out(shape);
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}
FArray to_numpy(const Matrix& m) { return to_numpy({m.rows, m.cols}, m.data); }
FArray to_numpy(const Tensor3& t) { return to_numpy({t.d, t.h, t.w}, t.data); }

FArray to_numpy(const TensorData& t) {
  return to_numpy(std::vector<std::size_t>(t.dims.begin(), t.dims.end()), t.data);
}

TensorData from_numpy(const FArray& a) {
  TensorData t;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) t.dims.push_back(static_cast<std::uint32_t>(a.shape(i)));
  t.data.assign(a.data(), a.data() + a.size());
  return t;
}

Matrix matrix_of(const FArray& a, const char* what) {
  if (a.ndim() != 2) throw DimensionError(std::string(what) + " must be 2-D");
  return from_numpy(a).as_matrix();
}

Tensor3 tensor_of(const FArray& a, const char* what) {
  if (a.ndim() != 3) throw DimensionError(std::string(what) + " must be D x H x W");
  return from_numpy(a).as_tensor3();
}

// A frame is one D x H x W array or a list of per-scale arrays.
StreamFrame frame_of(const py::object& features, const std::string& label,
                     const std::optional<FArray>& mask) {
  StreamFrame f;
  if (py::isinstance<py::list>(features) || py::isinstance<py::tuple>(features)) {
    for (const auto& s : features) f.scales.push_back(tensor_of(s.cast<FArray>(), "scale"));
  } else {
    f.scales.push_back(tensor_of(features.cast<FArray>(), "features"));
  }
  f.label = parse_label(label);
  if (mask) f.mask = matrix_of(*mask, "mask");
  return f;
}

// Engine settings use the same keys as the command-line config file.
EngineConfig engine_config_of(const py::dict& cfg) {
  auto doc = nlohmann::json::parse(py::module_::import("json").attr("dumps")(cfg).cast<std::string>());
  if (!doc.contains("synth") && !doc.contains("manifest")) doc["synth"] = nlohmann::json::object();
  return parse_run_config(doc).engine;
}

py::dict score_dict(const ScoreMap& m) {
  py::dict d;
  d["s"] = to_numpy(m.s);
  d["a"] = to_numpy(m.a);
  d["image_score"] = m.image_score;
  if (m.upsampled) d["upsampled"] = to_numpy(*m.upsampled);
  return d;
}

}  // namespace

PYBIND11_MODULE(_lemo, m) {
  m.doc() = "Online streaming anomaly detection with a learnable prototype memory.";

  auto base = py::register_exception<Error>(m, "LemoError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<EmptyShapeError>(m, "EmptyShapeError", base);
  py::register_exception<InsufficientPointsError>(m, "InsufficientPointsError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<ValidationError>(m, "ValidationError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<NumericalError>(m, "NumericalError", base);
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base);

  m.def("encode_tensor", [](const FArray& a) {
    const auto bytes = encode_tensor(from_numpy(a));
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("decode_tensor", [](const py::bytes& b) {
    const std::string s = b;
    return to_numpy(decode_tensor(std::vector<std::uint8_t>(s.begin(), s.end())));
  });
  m.def("write_tensor", [](const std::filesystem::path& p, const FArray& a) {
    write_tensor(p, from_numpy(a));
  });
  m.def("read_tensor", [](const std::filesystem::path& p) { return to_numpy(read_tensor(p)); });

  m.def(
      "load_manifest",
      [](const std::filesystem::path& p, bool require_pixel_masks) {
        const Manifest man = load_manifest(p, {.require_pixel_masks = require_pixel_masks});
        py::list records;
        for (const auto& r : man.records) {
          py::dict d;
          d["feature_path"] = r.feature_path ? py::cast(r.feature_path->string()) : py::none();
          py::list scales;
          for (const auto& s : r.scale_paths) scales.append(s.string());
          d["scale_paths"] = scales;
          d["label"] = to_string(r.label);
          d["mask_path"] = r.mask_path ? py::cast(r.mask_path->string()) : py::none();
          d["split"] = to_string(r.split);
          records.append(d);
        }
        return records;
      },
      py::arg("path"), py::arg("require_pixel_masks") = false);

  m.def("orthonormal_rows", [](std::uint64_t seed, std::size_t k, std::size_t d) {
    return to_numpy(orthonormal_rows(seed, k, d));
  }, py::arg("seed"), py::arg("k"), py::arg("d"));

  m.def("add_coords", [](const FArray& t) { return to_numpy(add_coords(tensor_of(t, "features"))); });

  m.def(
      "anonce_loss",
      [](const FArray& z, const FArray& protos, double tau, double r, std::size_t n_pos) {
        const auto res = anonce_loss(tensor_of(z, "z"), make_bank(matrix_of(protos, "protos")),
                                     {.tau = tau, .r = r, .n_pos = n_pos});
        return py::make_tuple(res.loss, to_numpy(res.grad_z), to_numpy(res.grad_p));
      },
      py::arg("z"), py::arg("protos"), py::arg("tau") = 0.1, py::arg("r") = 1e-5,
      py::arg("n_pos") = 3);

  m.def(
      "anomaly_map",
      [](const FArray& z, const FArray& protos) {
        return score_dict(anomaly_map(tensor_of(z, "z"), make_bank(matrix_of(protos, "protos"))));
      },
      py::arg("z"), py::arg("protos"));

  m.def("auroc", [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    return auroc(scores, labels);
  });
  m.def(
      "aupro",
      [](const std::vector<FArray>& maps, const std::vector<FArray>& masks, double fpr_limit) {
        std::vector<Matrix> mm, kk;
        for (const auto& a : maps) mm.push_back(matrix_of(a, "map"));
        for (const auto& a : masks) kk.push_back(matrix_of(a, "mask"));
        return aupro(mm, kk, {.fpr_limit = fpr_limit});
      },
      py::arg("maps"), py::arg("masks"), py::arg("fpr_limit") = 0.3);

  m.def(
      "synth_frame",
      [](std::uint64_t frame_idx, bool anomalous, std::uint64_t seed, std::size_t d_raw,
         std::size_t h, std::size_t w, double anomaly_shift) {
        SynthConfig sc;
        sc.seed = seed;
        sc.d_raw = d_raw;
        sc.h = h;
        sc.w = w;
        sc.anomaly_shift = anomaly_shift;
        sc.validate();
        const StreamFrame f = synth_frame(sc, frame_idx, anomalous);
        return py::make_tuple(to_numpy(f.scales.at(0)), f.mask ? py::object(to_numpy(*f.mask)) : py::none());
      },
      py::arg("frame_idx"), py::arg("anomalous") = false, py::arg("seed") = 0,
      py::arg("d_raw") = 64, py::arg("h") = 14, py::arg("w") = 14, py::arg("anomaly_shift") = 0.8);

  py::class_<Engine>(m, "Engine")
      .def(py::init([](std::size_t raw_channels, const py::dict& config) {
             return std::make_unique<Engine>(engine_config_of(config), raw_channels);
           }),
           py::arg("raw_channels"), py::arg("config") = py::dict())
      .def(
          "process",
          [](Engine& e, const py::object& features, const std::string& label) {
            const auto s = e.process(frame_of(features, label, std::nullopt));
            py::dict d;
            d["loss"] = s.loss;
            d["image_score"] = s.image_score;
            return d;
          },
          py::arg("features"), py::arg("label") = "unlabeled")
      .def(
          "train_step",
          [](Engine& e, const py::object& features) {
            return e.train_step(frame_of(features, "unlabeled", std::nullopt)).loss;
          },
          py::arg("features"))
      .def(
          "detect",
          [](const Engine& e, const py::object& features, const std::optional<FArray>& mask) {
            return score_dict(e.detect(frame_of(features, "unlabeled", mask)));
          },
          py::arg("features"), py::arg("mask") = std::nullopt)
      .def_property_readonly("prototypes", [](const Engine& e) { return to_numpy(e.model().bank.protos); })
      .def_property_readonly("adapter_weight", [](const Engine& e) { return to_numpy(e.model().adapter.weight); })
      .def_property_readonly("steps", &Engine::steps)
      .def_property_readonly("state_bytes", &Engine::state_bytes)
      .def_property_readonly("state_hash", &Engine::state_hash);

  m.def(
      "run",
      [](const std::filesystem::path& config, const std::filesystem::path& out,
         const std::vector<std::string>& overrides) {
        py::gil_scoped_release release;
        std::ostringstream log;
        return cmd_run({config, overrides, out, &log});
      },
      py::arg("config"), py::arg("out"), py::arg("overrides") = std::vector<std::string>{});
}
