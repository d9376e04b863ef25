// Python module: numpy in, numpy out. Arrays are NCHW float32.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <string>

#include "dmphn/checkpoint.hpp"
#include "dmphn/data.hpp"
#include "dmphn/hierarchy.hpp"
#include "dmphn/metrics.hpp"
#include "dmphn/model.hpp"
#include "dmphn/tensor.hpp"

namespace py = pybind11;
using namespace dmphn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> from_array(const FloatArray& a) {
  if (a.ndim() != 4) {
    throw std::invalid_argument("expected a 4-d NCHW float array");
  }
  Tensor<float> t({a.shape(0), a.shape(1), a.shape(2), a.shape(3)});
  std::memcpy(t.data(), a.data(), sizeof(float) * std::size_t(t.numel()));
  return t;
}

py::array_t<float> to_array(const Tensor<float>& t) {
  const Shape s = t.shape();
  py::array_t<float> a({s.n, s.c, s.h, s.w});
  std::memcpy(a.mutable_data(), t.data(), sizeof(float) * std::size_t(t.numel()));
  return a;
}

CodecConfig config_for(const std::string& profile) {
  if (profile.empty() || profile == "paper") return CodecConfig{};
  if (profile == "desk") return CodecConfig::desk();
  throw std::invalid_argument("profile must be 'paper' or 'desk'");
}

struct PyModel {
  AnyModel<float> m;

  py::array_t<float> forward(const FloatArray& x) const {
    return to_array(model_forward(m, from_array(x)));
  }

  // [0,1] image in, [0,1] image out; any size (padded and cropped back).
  py::array_t<float> deblur_img(const FloatArray& img) const {
    Tensor<float> x = from_array(img);
    for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] -= 0.5f;
    const InputGeometry g = input_geometry(m);
    auto [padded, box] = pad_to_valid(x, g.div_h, g.div_w, g.min_h, g.min_w);
    Tensor<float> y = crop_to(model_forward(m, padded), box);
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      y.data()[i] = std::min(1.0f, std::max(0.0f, y.data()[i] + 0.5f));
    }
    return to_array(y);
  }

  void save(const std::string& path) const {
    save_checkpoint(path, model_to_checkpoint(m));
  }

  std::string kind() const { return kind_name(m.kind); }
  std::string pattern() const {
    return m.kind == ModelKind::dmsn ? std::string() : m.spec.pattern();
  }
  std::int64_t params() const { return param_count(m); }
  std::vector<std::int64_t> flops(std::int64_t h, std::int64_t w) const {
    return level_flops(m, h, w);
  }
};

PyModel make_model(const std::string& kind, const std::string& pattern,
                   int stack, int scales, bool weight_sharing,
                   bool top_residual, const std::string& profile,
                   std::uint64_t seed) {
  return PyModel{make_any_model<float>(parse_kind(kind), pattern, stack,
                                       scales, config_for(profile), seed,
                                       weight_sharing, top_residual)};
}

PyModel load_model(const std::string& path) {
  return PyModel{model_from_checkpoint<float>(load_checkpoint(path))};
}

}  // namespace

PYBIND11_MODULE(_dmphn, mod) {
  mod.doc() = "multi-patch hierarchical deblurring core";

  py::class_<PyModel>(mod, "Model")
      .def(py::init(&make_model), py::arg("kind") = "dmphn",
           py::arg("pattern") = "1-2-4", py::arg("stack") = 1,
           py::arg("scales") = 1, py::arg("weight_sharing") = false,
           py::arg("top_residual") = true, py::arg("profile") = "paper",
           py::arg("seed") = 0)
      .def("forward", &PyModel::forward, py::arg("x"),
           "model-space forward pass on an NCHW array in [-0.5, 0.5]")
      .def("deblur", &PyModel::deblur_img, py::arg("image"),
           "restore a [0,1] NCHW image of any size")
      .def("save", &PyModel::save, py::arg("path"))
      .def("flops", &PyModel::flops, py::arg("h"), py::arg("w"),
           "analytic per-level forward FLOPs")
      .def_property_readonly("kind", &PyModel::kind)
      .def_property_readonly("pattern", &PyModel::pattern)
      .def_property_readonly("param_count", &PyModel::params);

  mod.def("load", &load_model, py::arg("path"),
          "load a Model from a checkpoint file");

  mod.def(
      "psnr",
      [](const FloatArray& a, const FloatArray& b) {
        return psnr(from_array(a), from_array(b));
      },
      py::arg("a"), py::arg("b"));
  mod.def(
      "ssim",
      [](const FloatArray& a, const FloatArray& b) {
        return ssim(from_array(a), from_array(b));
      },
      py::arg("a"), py::arg("b"));

  mod.def(
      "gen_dataset",
      [](const std::string& out_dir, int count, std::int64_t height,
         std::int64_t width, std::uint64_t seed, int frames_min,
         int frames_max, double d_max, double train_ratio) {
        DatasetOptions opt;
        opt.count = count;
        opt.height = height;
        opt.width = width;
        opt.seed = seed;
        opt.frames_min = frames_min;
        opt.frames_max = frames_max;
        opt.d_max = d_max;
        opt.train_ratio = train_ratio;
        return gen_dataset(out_dir, opt);
      },
      py::arg("out_dir"), py::arg("count") = 32, py::arg("height") = 64,
      py::arg("width") = 64, py::arg("seed") = 0, py::arg("frames_min") = 7,
      py::arg("frames_max") = 13, py::arg("d_max") = 2.0,
      py::arg("train_ratio") = 0.75,
      "write a synthetic blur/sharp dataset; returns the manifest path");

  mod.def(
      "load_image",
      [](const std::string& path) { return to_array(load_image(path)); },
      py::arg("path"), "read a PNG/PPM as a 1x3xHxW [0,1] array");
  mod.def(
      "save_image",
      [](const FloatArray& img, const std::string& path) {
        save_image(from_array(img), path);
      },
      py::arg("image"), py::arg("path"));
}
