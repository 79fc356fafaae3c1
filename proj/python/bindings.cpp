#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "micromotion/data_io.hpp"
#include "micromotion/eval.hpp"
#include "micromotion/network.hpp"
#include "micromotion/synthgait.hpp"
#include "micromotion/training.hpp"

namespace py = pybind11;
namespace mm = micromotion;

namespace {

const mm::Track& track_at(const mm::Dataset& ds, size_t i) {
  if (i >= ds.tracks.size()) throw py::index_error("track index out of range");
  return ds.tracks[i];
}

py::dict metrics_dict(const mm::MetricsReport& r) {
  py::dict d;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["accuracy"] = r.accuracy;
  d["support_walking"] = r.support_walking;
  d["support_standing"] = r.support_standing;
  return d;
}

py::dict track_features(const mm::Dataset& ds, size_t i, double conf_threshold) {
  const auto frames = mm::extract_track_features(track_at(ds, i), conf_threshold);
  const py::ssize_t n = static_cast<py::ssize_t>(frames.size());
  py::array_t<double> position({n, static_cast<py::ssize_t>(mm::kPositionDim)});
  py::array_t<double> distance({n, static_cast<py::ssize_t>(mm::kDistanceDim)});
  py::array_t<double> angle_static({n, static_cast<py::ssize_t>(mm::kAngleDim)});
  py::array_t<double> angle_dynamic({n, static_cast<py::ssize_t>(mm::kAngleDim)});
  py::array_t<int64_t> frame_index(n);
  auto pos = position.mutable_unchecked<2>();
  auto dist = distance.mutable_unchecked<2>();
  auto ast = angle_static.mutable_unchecked<2>();
  auto adn = angle_dynamic.mutable_unchecked<2>();
  auto fidx = frame_index.mutable_unchecked<1>();
  for (py::ssize_t t = 0; t < n; ++t) {
    const mm::FeatureFrame& f = frames[static_cast<size_t>(t)];
    for (int k = 0; k < mm::kPositionDim; ++k) pos(t, k) = f.position[k];
    for (int k = 0; k < mm::kDistanceDim; ++k) dist(t, k) = f.distance[k];
    for (int k = 0; k < mm::kAngleDim; ++k) ast(t, k) = f.angle_static[k];
    for (int k = 0; k < mm::kAngleDim; ++k) adn(t, k) = f.angle_dynamic[k];
    fidx(t) = f.frame_index;
  }
  py::dict d;
  d["position"] = position;
  d["distance"] = distance;
  d["angle_static"] = angle_static;
  d["angle_dynamic"] = angle_dynamic;
  d["frame_index"] = frame_index;
  return d;
}

py::array_t<double> infer_probs(const mm::ModelParams& params, const mm::Dataset& ds,
                                size_t i, double conf_threshold) {
  const auto probs = mm::infer_track(params, track_at(ds, i), conf_threshold);
  py::array_t<double> out(static_cast<py::ssize_t>(probs.size()));
  auto v = out.mutable_unchecked<1>();
  for (py::ssize_t t = 0; t < out.shape(0); ++t) {
    v(t) = probs[static_cast<size_t>(t)].walking;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "pedestrian motion-state estimation from 2D pose tracks";

  py::register_exception<mm::Error>(m, "MicromotionError");

  py::class_<mm::Dataset>(m, "Dataset")
      .def_property_readonly("num_tracks",
                             [](const mm::Dataset& ds) { return ds.tracks.size(); })
      .def("total_frames", &mm::Dataset::total_frames)
      .def("track_id",
           [](const mm::Dataset& ds, size_t i) { return track_at(ds, i).track_id; })
      .def("track_length",
           [](const mm::Dataset& ds, size_t i) { return track_at(ds, i).poses.size(); })
      .def("track_labels",
           [](const mm::Dataset& ds, size_t i) {
             const mm::Track& t = track_at(ds, i);
             py::array_t<int8_t> out(static_cast<py::ssize_t>(t.labels.size()));
             auto v = out.mutable_unchecked<1>();
             for (py::ssize_t k = 0; k < out.shape(0); ++k) {
               v(k) = static_cast<int8_t>(t.labels[static_cast<size_t>(k)]);
             }
             return out;
           })
      .def("track_features", &track_features, py::arg("i"),
           py::arg("conf_threshold") = mm::kDefaultConfThreshold);

  py::class_<mm::ModelParams>(m, "Model");

  py::class_<mm::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr0", &mm::TrainConfig::lr0)
      .def_readwrite("epochs", &mm::TrainConfig::epochs)
      .def_readwrite("batch_size", &mm::TrainConfig::batch_size)
      .def_readwrite("decay_factor", &mm::TrainConfig::decay_factor)
      .def_readwrite("decay_every", &mm::TrainConfig::decay_every)
      .def_readwrite("l2_weight", &mm::TrainConfig::l2_weight)
      .def_readwrite("dropout_rate", &mm::TrainConfig::dropout_rate)
      .def_readwrite("seq_len_min", &mm::TrainConfig::seq_len_min)
      .def_readwrite("seq_len_max", &mm::TrainConfig::seq_len_max)
      .def_readwrite("seed", &mm::TrainConfig::seed)
      .def_readwrite("val_fraction", &mm::TrainConfig::val_fraction)
      .def_readwrite("conf_threshold", &mm::TrainConfig::conf_threshold);

  py::class_<mm::TrainResult>(m, "TrainResult")
      .def_readonly("aborted", &mm::TrainResult::aborted)
      .def_property_readonly("best",
                             [](const mm::TrainResult& r) { return r.best_params; })
      .def_property_readonly("final",
                             [](const mm::TrainResult& r) { return r.final_params; })
      .def_property_readonly("history", [](const mm::TrainResult& r) {
        py::list out;
        for (const mm::EpochRecord& rec : r.history) {
          py::dict d;
          d["epoch"] = rec.epoch;
          d["train_loss"] = rec.train_loss;
          d["val"] = metrics_dict(rec.val);
          out.append(d);
        }
        return out;
      });

  py::class_<mm::GaitConfig>(m, "GaitConfig")
      .def(py::init<>())
      .def_readwrite("fps", &mm::GaitConfig::fps)
      .def_readwrite("cadence", &mm::GaitConfig::cadence)
      .def_readwrite("swing_amplitude", &mm::GaitConfig::swing_amplitude)
      .def_readwrite("arm_amplitude", &mm::GaitConfig::arm_amplitude)
      .def_readwrite("jitter_sigma", &mm::GaitConfig::jitter_sigma)
      .def_readwrite("body_scale", &mm::GaitConfig::body_scale);

  m.def("generate_dataset", &mm::generate_dataset, py::arg("n_tracks"),
        py::arg("mix") = 0.5, py::arg("seed") = 0,
        py::arg("base") = mm::GaitConfig{});
  m.def("load_tracks", &mm::load_tracks, py::arg("path"),
        py::arg("conf_threshold") = mm::kDefaultConfThreshold);
  m.def("save_tracks", &mm::save_tracks, py::arg("dataset"), py::arg("path"),
        py::arg("header_comments") = std::vector<std::string>{});
  m.def("split_dataset", &mm::split_dataset, py::arg("dataset"), py::arg("fraction"),
        py::arg("seed"));
  m.def(
      "train",
      [](const mm::Dataset& ds, const mm::TrainConfig& cfg) { return mm::train(ds, cfg); },
      py::arg("dataset"), py::arg("config") = mm::TrainConfig{});
  m.def(
      "evaluate",
      [](const mm::ModelParams& params, const mm::Dataset& ds, double conf) {
        return metrics_dict(mm::evaluate(params, ds, conf));
      },
      py::arg("model"), py::arg("dataset"),
      py::arg("conf_threshold") = mm::kDefaultConfThreshold);
  m.def("infer_track", &infer_probs, py::arg("model"), py::arg("dataset"), py::arg("i"),
        py::arg("conf_threshold") = mm::kDefaultConfThreshold);
  m.def(
      "save_model",
      [](const mm::ModelParams& params, const std::string& path) {
        mm::save_model(params, {}, path);
      },
      py::arg("model"), py::arg("path"));
  m.def(
      "load_model",
      [](const std::string& path) { return mm::load_model(path).params; },
      py::arg("path"));
  m.def(
      "grad_check",
      [](uint64_t seed) {
        const mm::GradCheckReport r = mm::grad_check_tiny(seed);
        py::dict d;
        d["max_rel_error"] = r.max_rel_error;
        d["worst_path"] = r.worst_path;
        d["params_checked"] = r.params_checked;
        return d;
      },
      py::arg("seed") = 0);

#ifdef VERSION_INFO
  m.attr("__version__") = VERSION_INFO;
#else
  m.attr("__version__") = "dev";
#endif
}
