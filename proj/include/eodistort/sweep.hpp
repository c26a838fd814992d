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
#ifndef EODISTORT_SWEEP_HPP_
#define EODISTORT_SWEEP_HPP_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eodistort/dataset.hpp"
#include "eodistort/distortions.hpp"
#include "eodistort/error.hpp"
#include "eodistort/metrics.hpp"
#include "eodistort/predictors.hpp"

namespace eodistort {

// {0.0, 0.1, ..., 1.0}
std::vector<double> DefaultIntensityGrid();
inline constexpr int kDefaultSwapReplicates = 3;

struct TransformSpec {
  DistortionKind kind = DistortionKind::kGrayScale;
  std::optional<Channel> channel;
  std::vector<double> grid = DefaultIntensityGrid();
  int replicates = 1;

  // Name used in CSV rows, chart file names and the staging tree:
  // gray, pixel-swap, color-dup-r|g|b, context-mask.
  std::string Label() const;
};

// The four default transforms: gray and color-dup (R) over the default grid,
// pixel-swap over the default grid with three replicates, and context-mask at
// the single point 1.0 (its intensity is not used).
std::vector<TransformSpec> DefaultTransforms();

// How the sweep obtains predictions. Oracle/constant/nearest-color/variance
// are built in; external runs a command through the directory protocol.
struct PredictorSpec {
  enum class Kind { kOracle, kNearestColor, kConstant, kVariance, kExternal };
  Kind kind = Kind::kOracle;
  std::map<ClassId, Rgb> centroids;  // nearest-color
  ClassId class_id = 0;              // constant
  VariancePredictor variance;        // variance
  std::string command;               // external
  std::filesystem::path staging_dir; // external
  std::chrono::seconds timeout = kDefaultExternalTimeout;
};

struct SweepConfig {
  std::filesystem::path manifest_path;
  Split split = Split::kVal;
  std::vector<TransformSpec> transforms = DefaultTransforms();
  // Empty means every non-background class of the manifest.
  std::vector<ClassId> classes;
  PredictorSpec predictor;
  std::uint64_t seed = 0;
  // Replace every non-target pixel by the fill in every run.
  bool context_masking = false;
  // Fill source: explicit means win, else the means of fill_split.
  std::optional<ChannelStats> fill_means;
  Split fill_split = Split::kTrain;
  // Worker threads; 0 picks the hardware concurrency.
  int jobs = 0;
  // Simultaneous external predictor invocations.
  int max_external = 1;
  // Images per predictor call; 0 sends the whole split at once.
  std::size_t batch_size = 0;

  // Throws kMalformedConfig describing the first violated invariant.
  void Validate() const;
  // Canonical JSON (sorted keys, no jobs) and its FNV-1a digest.
  std::string CanonicalJson() const;
  std::string Digest() const;
};

// Relative paths (manifest, staging_dir) resolve against the config file's
// directory. Missing "seed" falls back to EO_DISTORT_SEED, then 0.
SweepConfig LoadSweepConfig(const std::filesystem::path& path);
SweepConfig ParseSweepConfig(std::string_view json_text,
                             const std::filesystem::path& base_dir);

struct SweepRecord {
  std::string transform;  // TransformSpec::Label()
  ClassId class_id = 0;
  std::string class_name;
  double intensity = 0.0;
  int replicate = 0;
  std::optional<double> iou;  // IoU of class_id over the whole split
  std::uint64_t true_positives = 0;
  std::uint64_t false_positives = 0;
  std::uint64_t false_negatives = 0;
  // Mean over target classes of the replicate-averaged IoU at this
  // (transform, intensity); undefined classes are skipped.
  std::optional<double> mean_iou;

  friend bool operator==(const SweepRecord&, const SweepRecord&) = default;
};

struct SweepProvenance {
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string started_at;   // ISO 8601 UTC
  std::string finished_at;
};

struct SweepReport {
  Split split = Split::kVal;
  std::uint64_t seed = 0;
  std::vector<SweepRecord> records;  // ordered (transform, class, intensity, replicate)
  SweepProvenance provenance;
};

// A cell failure, tagged with its coordinates; carries the records of every
// cell that completed so callers can flush partial results.
class SweepError : public Error {
 public:
  SweepError(const Error& cause, std::string tag, SweepReport partial);
  const SweepReport& partial() const noexcept { return partial_; }
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
  SweepReport partial_;
};

SweepReport RunSweep(const SweepConfig& config);

// Writes every cell's distorted images under
// <root>/<transform>/<class_id>/<intensity>/<replicate>/ as input_dir/*.png
// with input_dir/batch.json (and a copy of batch.json next to it), plus an
// empty output_dir. <root>/sweep.json records the config digest.
void StageSweep(const SweepConfig& config, const std::filesystem::path& root);

// Reads output_dir/<id>.png for every staged cell and builds the report.
// Throws kMissingPrediction listing every absent prediction, or
// kMalformedConfig when the staging tree came from a different config.
SweepReport CollectSweep(const SweepConfig& config,
                         const std::filesystem::path& root);

// Relative path of one cell inside the staging tree.
std::filesystem::path CellPath(const TransformSpec& transform, ClassId class_id,
                               double intensity, int replicate);

// Intensities are printed with six decimals everywhere (CSV, paths).
std::string FormatIntensity(double value);

}  // namespace eodistort

#endif  // EODISTORT_SWEEP_HPP_
