/* Copyright 2026 The eodistort Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
// Python bindings. Images cross the boundary as uint8 arrays of shape
// (H, W, 3); label maps as uint8 arrays of shape (H, W).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "eodistort/dataset.hpp"
#include "eodistort/distortions.hpp"
#include "eodistort/error.hpp"
#include "eodistort/metrics.hpp"
#include "eodistort/raster.hpp"
#include "eodistort/report.hpp"
#include "eodistort/sweep.hpp"

namespace py = pybind11;

namespace eodistort {
namespace {

static_assert(sizeof(Rgb) == 3, "Rgb must be tightly packed");

using ImageArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

ImageBuffer ToImage(const ImageArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) {
    throw Error(ErrorCode::kDimensionMismatch, "image must have shape (H, W, 3)");
  }
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  std::vector<Rgb> pixels(w * h);
  std::memcpy(pixels.data(), a.data(), pixels.size() * sizeof(Rgb));
  return ImageBuffer(w, h, std::move(pixels));
}

LabelMap ToLabels(const ImageArray& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::kDimensionMismatch, "labels must have shape (H, W)");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  return LabelMap(w, h, std::vector<ClassId>(a.data(), a.data() + w * h));
}

ImageArray FromImage(const ImageBuffer& img) {
  ImageArray out({img.height(), img.width(), std::size_t{3}});
  std::memcpy(out.mutable_data(), img.pixels().data(), img.size() * sizeof(Rgb));
  return out;
}

ImageArray FromLabels(const LabelMap& labels) {
  ImageArray out({labels.height(), labels.width()});
  std::memcpy(out.mutable_data(), labels.labels().data(), labels.size());
  return out;
}

ChannelStats ToFill(const std::array<double, 3>& f) { return {f[0], f[1], f[2], 0}; }

SweepConfig ConfigWithJobs(const std::filesystem::path& path, std::optional<int> jobs) {
  SweepConfig config = LoadSweepConfig(path);
  if (jobs) {
    config.jobs = *jobs;
    config.Validate();
  }
  return config;
}

}  // namespace
}  // namespace eodistort

PYBIND11_MODULE(_core, m) {
  using namespace eodistort;
  m.doc() = "Class-conditional image distortions and robustness sweeps.";

  // Raised for every library failure; `code` names the error code and
  // `external` flags failures of an external predictor process.
  static PyObject* error_type =
      PyErr_NewException("eodistort._core.EodistortError", PyExc_RuntimeError, nullptr);
  m.add_object("EodistortError", py::handle(error_type));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type)(e.what());
      exc.attr("code") = std::string(ErrorCodeName(e.code()));
      exc.attr("external") = e.is_external();
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def("luma", [](int r, int g, int b) {
    return Luma({std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)});
  }, py::arg("r"), py::arg("g"), py::arg("b"));
  m.def("rgb_to_gray", [](int r, int g, int b) {
    return int(RgbToGray({std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)}));
  }, py::arg("r"), py::arg("g"), py::arg("b"));

  m.def("gray", [](const ImageArray& image, const ImageArray& labels, int class_id,
                   double lam) {
    return FromImage(GrayScaleTransform(ToImage(image), ToLabels(labels), ClassId(class_id), lam));
  }, py::arg("image"), py::arg("labels"), py::arg("class_id"), py::arg("lam"));

  m.def("pixel_swap", [](const ImageArray& image, const ImageArray& labels, int class_id,
                         double p, std::uint64_t seed, std::uint64_t image_index,
                         std::uint32_t replicate) {
    RngStream rng(seed, image_index, ClassId(class_id), replicate);
    return FromImage(PixelSwap(ToImage(image), ToLabels(labels), ClassId(class_id), p, rng));
  }, py::arg("image"), py::arg("labels"), py::arg("class_id"), py::arg("p"),
     py::arg("seed") = 0, py::arg("image_index") = 0, py::arg("replicate") = 0);

  m.def("color_dup", [](const ImageArray& image, const ImageArray& labels, int class_id,
                        const std::string& channel, double lam) {
    return FromImage(ColorDuplication(ToImage(image), ToLabels(labels), ClassId(class_id),
                                      ParseChannel(channel), lam));
  }, py::arg("image"), py::arg("labels"), py::arg("class_id"), py::arg("channel"),
     py::arg("lam"));

  m.def("context_mask", [](const ImageArray& image, const ImageArray& labels, int class_id,
                           const std::array<double, 3>& fill) {
    return FromImage(ContextMask(ToImage(image), ToLabels(labels), ClassId(class_id),
                                 ToFill(fill)));
  }, py::arg("image"), py::arg("labels"), py::arg("class_id"), py::arg("fill"));

  m.def("distort", [](const ImageArray& image, const ImageArray& labels,
                      const std::string& kind, int class_id, double intensity,
                      std::optional<std::string> channel, std::uint64_t seed,
                      std::uint64_t image_index, std::uint32_t replicate,
                      std::optional<std::array<double, 3>> fill, bool mask_context) {
    DistortionSpec spec;
    spec.kind = ParseKind(kind);
    spec.class_id = ClassId(class_id);
    spec.intensity = intensity;
    if (channel) spec.channel = ParseChannel(*channel);
    spec.seed = seed;
    spec.image_index = image_index;
    spec.replicate = replicate;
    if (fill) spec.fill = ToFill(*fill);
    spec.mask_context = mask_context;
    spec.Validate();
    return py::make_tuple(FromImage(Apply(ToImage(image), ToLabels(labels), spec)),
                          spec.Digest());
  }, py::arg("image"), py::arg("labels"), py::arg("kind"), py::arg("class_id"),
     py::arg("intensity") = 0.0, py::arg("channel") = py::none(), py::arg("seed") = 0,
     py::arg("image_index") = 0, py::arg("replicate") = 0, py::arg("fill") = py::none(),
     py::arg("mask_context") = false,
     "Applies one distortion; returns (image, spec digest).");

  m.def("iou", [](const ImageArray& truth, const ImageArray& pred,
                  const std::vector<int>& class_ids, int background) {
    std::vector<ClassId> ids(class_ids.begin(), class_ids.end());
    ConfusionMatrix cm(ids);
    cm.Accumulate(ToLabels(truth), ToLabels(pred), ClassId(background));
    py::dict per_class;
    for (ClassId id : ids) {
      if (id == background) continue;
      const auto v = Iou(cm, id);
      per_class[py::int_(int(id))] = v ? py::object(py::float_(*v)) : py::object(py::none());
    }
    return py::make_tuple(per_class, MeanIou(cm, ClassId(background)));
  }, py::arg("truth"), py::arg("pred"), py::arg("class_ids"), py::arg("background") = 0,
     "Returns ({class_id: iou or None}, mean IoU).");

  m.def("load_image", [](const std::filesystem::path& p) { return FromImage(LoadImage(p)); });
  m.def("save_image", [](const ImageArray& a, const std::filesystem::path& p) {
    SaveImage(ToImage(a), p);
  });
  m.def("load_labels", [](const std::filesystem::path& p) { return FromLabels(LoadLabels(p)); });
  m.def("save_labels", [](const ImageArray& a, const std::filesystem::path& p) {
    SaveLabels(ToLabels(a), p);
  });

  m.def("run_sweep", [](const std::filesystem::path& config, std::optional<int> jobs) {
    const auto c = ConfigWithJobs(config, jobs);
    py::gil_scoped_release release;
    return ToCsv(RunSweep(c));
  }, py::arg("config"), py::arg("jobs") = py::none(), "Runs a sweep; returns the CSV text.");
  m.def("stage_sweep", [](const std::filesystem::path& config,
                          const std::filesystem::path& root, std::optional<int> jobs) {
    const auto c = ConfigWithJobs(config, jobs);
    py::gil_scoped_release release;
    StageSweep(c, root);
  }, py::arg("config"), py::arg("root"), py::arg("jobs") = py::none());
  m.def("collect_sweep", [](const std::filesystem::path& config,
                            const std::filesystem::path& root) {
    const auto c = LoadSweepConfig(config);
    py::gil_scoped_release release;
    return ToCsv(CollectSweep(c, root));
  }, py::arg("config"), py::arg("root"));
}
