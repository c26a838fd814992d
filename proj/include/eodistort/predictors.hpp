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
#ifndef EODISTORT_PREDICTORS_HPP_
#define EODISTORT_PREDICTORS_HPP_

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "eodistort/raster.hpp"

namespace eodistort {

struct BatchItem {
  std::string id;
  ImageBuffer image;
};

struct Prediction {
  std::string id;
  LabelMap labels;
};

// Returns the ground-truth map registered for each id.
struct OraclePredictor {
  std::shared_ptr<const std::map<std::string, LabelMap>> truth;
};

// Labels each pixel with the class whose centroid is nearest in squared RGB
// distance; ties go to the lower class id.
struct NearestColorPredictor {
  std::map<ClassId, Rgb> centroids;
};

struct ConstantClassPredictor {
  ClassId class_id = 0;
};

// Labels a pixel low_class when the per-channel variance of its window,
// averaged over the three channels, is below threshold, else high_class.
// Windows near the border are clamped (edge pixels replicated).
struct VariancePredictor {
  double threshold = 0.0;
  int window = 3;
  ClassId low_class = 0;
  ClassId high_class = 0;
};

inline constexpr std::chrono::seconds kDefaultExternalTimeout{3600};

// Directory-exchange protocol. For each batch the harness writes
// <input_dir>/<id>.png plus <input_dir>/batch.json, runs the command with
// {input_dir} and {output_dir} substituted (shell-quoted), and reads
// <output_dir>/<id>.png single-channel label maps back.
struct ExternalPredictor {
  std::string command_template;
  std::filesystem::path staging_dir;
  std::chrono::seconds timeout = kDefaultExternalTimeout;
};

class PredictorHandle {
 public:
  using Variant = std::variant<OraclePredictor, NearestColorPredictor,
                               ConstantClassPredictor, VariancePredictor,
                               ExternalPredictor>;

  // Throws kInvalidSpec when an external template lacks a placeholder or a
  // variance window is not an odd number >= 3.
  explicit PredictorHandle(Variant impl);

  static PredictorHandle Oracle(std::map<std::string, LabelMap> truth);
  static PredictorHandle NearestColor(std::map<ClassId, Rgb> centroids);
  static PredictorHandle ConstantClass(ClassId class_id);
  static PredictorHandle External(std::string command_template,
                                  std::filesystem::path staging_dir,
                                  std::chrono::seconds timeout =
                                      kDefaultExternalTimeout);

  const Variant& impl() const noexcept { return impl_; }
  bool is_external() const noexcept {
    return std::holds_alternative<ExternalPredictor>(impl_);
  }
  std::string_view kind_name() const noexcept;

  // One map per item, same dimensions, in input order. Errors:
  // kExternalCommandFailed, kExternalTimeout, kMissingPrediction,
  // kDimensionMismatch, kInvalidSpec (empty batch or unknown oracle id).
  std::vector<Prediction> PredictBatch(std::span<const BatchItem> items) const;

 private:
  Variant impl_;
};

PredictorHandle MakeVariancePredictor(double threshold, int window,
                                      ClassId low_class, ClassId high_class);

// Building blocks shared by the external predictor and offline staging.
struct StagedImage {
  std::string id;
  std::size_t width = 0;
  std::size_t height = 0;
};

// Writes <dir>/<id>.png for every item and <dir>/batch.json:
//   {"images": [{"id": ..., "file": "<id>.png", "width": W, "height": H}]}
std::vector<StagedImage> WriteBatch(const std::filesystem::path& input_dir,
                                    std::span<const BatchItem> items);
std::string BatchJson(std::span<const StagedImage> images);
std::vector<StagedImage> ReadBatchJson(const std::filesystem::path& path);

// Reads <output_dir>/<id>.png for every staged image. Every absent id is
// listed in a single kMissingPrediction error.
std::vector<Prediction> CollectBatch(const std::filesystem::path& output_dir,
                                     std::span<const StagedImage> images);

// Substitutes {input_dir}/{output_dir} with single-quoted shell words.
std::string ExpandCommand(std::string_view command_template,
                          const std::filesystem::path& input_dir,
                          const std::filesystem::path& output_dir);

// Runs `command` via /bin/sh -c in its own process group with the child's
// stdout redirected to stderr. Returns the exit status; throws
// kExternalTimeout (after killing the group) or kExternalCommandFailed when
// the process cannot be started or dies from a signal.
int RunShellCommand(const std::string& command, std::chrono::seconds timeout);

}  // namespace eodistort

#endif  // EODISTORT_PREDICTORS_HPP_
