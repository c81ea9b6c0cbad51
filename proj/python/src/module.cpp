#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "gcsich/checkpoint.hpp"
#include "gcsich/cli.hpp"
#include "gcsich/ctprep.hpp"
#include "gcsich/evaluator.hpp"
#include "gcsich/explain.hpp"
#include "gcsich/fusionnet.hpp"
#include "gcsich/run_config.hpp"
#include "gcsich/synth.hpp"

namespace py = pybind11;
using namespace gcsich;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

GrayImage to_gray(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D image");
  GrayImage g(static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), g.pixels.begin());
  return g;
}

Array from_values(const std::vector<double>& v, std::size_t h, std::size_t w) {
  Array out({h, w});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<bool> from_mask(const prep::BinaryMask& m) {
  py::array_t<bool> out({m.height, m.width});
  auto* dst = out.mutable_data();
  for (std::size_t i = 0; i < m.bits.size(); ++i) dst[i] = m.bits[i] != 0;
  return out;
}

prep::StripConfig strip_config(double bone, double tissue_low, double min_area_fraction) {
  prep::StripConfig c;
  c.thresholds.bone = bone;
  c.thresholds.tissue_low = tissue_low;
  c.min_area_fraction = min_area_fraction;
  return c;
}

template <typename T>
std::vector<T> to_vector(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

py::object optional_value(const std::optional<double>& v) {
  if (!v) return py::none();
  return py::float_(*v);
}

// A model plus the image size it expects; images come in as H x W arrays.
class PyModel {
 public:
  explicit PyModel(net::FusionModel m) : model_(std::move(m)) {}

  static PyModel create(const std::string& preset, const std::string& fusion, const std::string& dtype,
                        std::uint64_t seed) {
    auto c = preset == "paper-scale" ? net::ModelConfig::paper_scale() : net::ModelConfig::tiny();
    if (preset != "tiny" && preset != "paper-scale") throw std::invalid_argument("unknown preset '" + preset + "'");
    c.fusion = net::parse_fusion(fusion);
    if (dtype != "f32" && dtype != "f64") throw std::invalid_argument("dtype must be f32 or f64");
    c.dtype = dtype == "f64" ? num::DType::f64 : num::DType::f32;
    return PyModel(net::init_model(c, seed));
  }

  static PyModel from_run(const std::filesystem::path& run_dir, const std::string& checkpoint) {
    const auto cfg = cli::load_run_config(run_dir / "run_config.toml");
    return PyModel(net::load_model(run_dir / (checkpoint + ".gich"), cfg.model));
  }

  Array predict(const Array& image, int gcs, const std::string& mode) const {
    net::RunOptions run;
    run.input = net::parse_input_mode(mode);
    const auto p = net::forward(tensor(image), gcs, model_, run);
    Array out(std::vector<py::ssize_t>{2});
    out.mutable_data()[0] = p[0];
    out.mutable_data()[1] = p[1];
    return out;
  }

  Array saliency(const Array& image, int gcs, int target, std::size_t n_samples, double sigma, std::uint64_t seed,
                 const std::string& mode) const {
    const auto cam = explain::fusion_cam_model(model_, gcs, net::parse_input_mode(mode));
    const auto m = n_samples == 0 ? explain::grad_cam(cam, tensor(image), target)
                                  : explain::smooth_grad_cam(cam, tensor(image), target, {n_samples, sigma, seed});
    return from_values(m.values, m.height, m.width);
  }

  void save(const std::filesystem::path& path) const { net::save_checkpoint(path, model_.params); }
  std::size_t parameter_count() const { return model_.params.parameter_count(); }
  std::size_t input_size() const { return model_.config.input_size; }

 private:
  num::Tensor tensor(const Array& image) const {
    const auto g = to_gray(image);
    return num::Tensor::from({1, g.height, g.width}, g.pixels, model_.config.dtype);
  }

  net::FusionModel model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multimodal CT and GCS prognosis pipeline";

  py::register_exception<prep::EmptyBrainError>(m, "EmptyBrainError", PyExc_ValueError);
  py::register_exception<cli::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "gcsich");
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a gcsich subcommand; returns (exit code, stdout, stderr).");

  m.def(
      "threshold_segment",
      [](const Array& image, double bone, double tissue_low) {
        const auto masks = prep::threshold_segment(to_gray(image), {bone, tissue_low});
        return py::make_tuple(from_mask(masks.bone), from_mask(masks.tissue));
      },
      py::arg("image"), py::arg("bone") = 0.95, py::arg("tissue_low") = 0.06,
      "Returns (bone mask, tissue mask).");

  m.def(
      "strip_nonbrain",
      [](const Array& image, double bone, double tissue_low, double min_area_fraction) {
        const auto g = prep::strip_nonbrain(to_gray(image), strip_config(bone, tissue_low, min_area_fraction));
        return from_values(g.pixels, g.height, g.width);
      },
      py::arg("image"), py::arg("bone") = 0.95, py::arg("tissue_low") = 0.06, py::arg("min_area_fraction") = 0.005);

  m.def(
      "tissue_statistics",
      [](const std::vector<Array>& images) {
        std::vector<GrayImage> g;
        for (const auto& a : images) g.push_back(to_gray(a));
        const auto s = prep::tissue_statistics(g);
        return py::make_tuple(s.mean, s.std);
      },
      py::arg("images"), "Mean and std over the nonzero pixels of stripped images.");

  m.def(
      "standardize",
      [](const Array& image, double mean, double std) {
        const auto g = to_gray(image);
        return from_values(prep::standardize(g, mean, std, num::DType::f64).to_vector(), g.height, g.width);
      },
      py::arg("image"), py::arg("mean"), py::arg("std"));

  m.def(
      "roc_auc",
      [](const Array& scores, const py::array_t<int, py::array::c_style | py::array::forcecast>& truths) {
        const auto s = to_vector<double>(scores);
        const auto t = to_vector<int>(truths);
        const auto roc = eval::roc_auc(s, t);
        std::vector<double> fpr, tpr;
        for (const auto& p : roc.points) {
          fpr.push_back(p.fpr);
          tpr.push_back(p.tpr);
        }
        return py::make_tuple(roc.auc, py::array(py::cast(fpr)), py::array(py::cast(tpr)));
      },
      py::arg("scores"), py::arg("truths"), "Returns (auc, fpr, tpr).");

  m.def(
      "confusion_metrics",
      [](const py::array_t<int, py::array::c_style | py::array::forcecast>& predictions,
         const py::array_t<int, py::array::c_style | py::array::forcecast>& truths) {
        const auto p = to_vector<int>(predictions);
        const auto t = to_vector<int>(truths);
        const auto c = eval::confusion_metrics(p, t);
        py::dict d;
        d["tp"] = c.counts.tp;
        d["fp"] = c.counts.fp;
        d["tn"] = c.counts.tn;
        d["fn"] = c.counts.fn;
        d["accuracy"] = optional_value(c.accuracy);
        d["tpr"] = optional_value(c.tpr);
        d["tnr"] = optional_value(c.tnr);
        d["f1"] = optional_value(c.f1);
        return d;
      },
      py::arg("predictions"), py::arg("truths"));

  m.def(
      "majority_vote",
      [](const std::vector<int>& votes) {
        const auto r = eval::majority_vote(votes);
        return py::make_tuple(r.prediction, r.tie);
      },
      py::arg("votes"), "Returns (prediction, tie).");

  m.def(
      "simulate_phantom",
      [](std::size_t patients, std::size_t slices, std::size_t image_size, const std::string& rule,
         std::uint64_t seed) {
        synth::PhantomSpec s;
        s.patients = patients;
        s.min_slices = s.max_slices = slices;
        s.image_size = image_size;
        s.rule = synth::parse_label_rule(rule);
        s.seed = seed;
        py::list out;
        for (const auto& p : synth::simulate(s)) {
          Array images({p.slices.size(), image_size, image_size});
          auto* dst = images.mutable_data();
          for (const auto& sl : p.slices) dst = std::copy(sl.image.pixels.begin(), sl.image.pixels.end(), dst);
          py::dict d;
          d["patient_id"] = p.patient_id;
          d["gcs"] = p.gcs;
          d["gos"] = p.gos;
          d["has_blob"] = p.has_blob;
          d["images"] = images;
          out.append(d);
        }
        return out;
      },
      py::arg("patients") = 40, py::arg("slices") = 5, py::arg("image_size") = 32, py::arg("rule") = "gcs-only",
      py::arg("seed") = 0);

  py::class_<PyModel>(m, "Model")
      .def(py::init(&PyModel::create), py::arg("preset") = "tiny", py::arg("fusion") = "single-token",
           py::arg("dtype") = "f32", py::arg("seed") = 0)
      .def_static("from_run", &PyModel::from_run, py::arg("run_dir"), py::arg("checkpoint") = "final",
                  "Loads a trained run directory written by `gcsich train`.")
      .def("predict", &PyModel::predict, py::arg("image"), py::arg("gcs"), py::arg("mode") = "fusion",
           "Class probabilities; index 1 is the favorable outcome.")
      .def("saliency", &PyModel::saliency, py::arg("image"), py::arg("gcs"), py::arg("target") = 1,
           py::arg("n_samples") = 25, py::arg("sigma") = 0.1, py::arg("seed") = 0, py::arg("mode") = "fusion",
           "Smoothed class-activation map in [0, 1]; n_samples = 0 gives the plain map.")
      .def("save", &PyModel::save, py::arg("path"))
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def_property_readonly("input_size", &PyModel::input_size);
}
