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
// eodistort: class-conditional image distortions and robustness sweeps.
//
// stdout carries only machine-readable results (JSON documents); every
// diagnostic goes to stderr. Exit codes: 0 success, 1 usage or validation
// failure, 2 external predictor failure.

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eodistort/dataset.hpp"
#include "eodistort/distortions.hpp"
#include "eodistort/error.hpp"
#include "eodistort/metrics.hpp"
#include "eodistort/raster.hpp"
#include "eodistort/report.hpp"
#include "eodistort/sweep.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace eodistort {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitExternal = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int ExitCodeFor(const Error& e) { return e.is_external() ? kExitExternal : kExitUsage; }

std::uint64_t ResolveSeed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  const char* env = std::getenv("EO_DISTORT_SEED");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || end == env || *end != '\0') {
    throw UsageError(std::string("EO_DISTORT_SEED='") + env + "' is not an integer");
  }
  return v;
}

ChannelStats ParseFillMeans(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("--fill-means expects three numbers 'r,g,b', got '" + text + "'");
    }
  }
  if (values.size() != 3) {
    throw UsageError("--fill-means expects three numbers 'r,g,b', got '" + text + "'");
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 255.0)) throw UsageError("--fill-means values must lie in [0,255]");
  }
  return {values[0], values[1], values[2], 0};
}

void PrintJson(const json& doc) { std::cout << doc.dump(2) << std::endl; }

// --- distort ---------------------------------------------------------------

struct DistortArgs {
  std::string image;
  std::string labels;
  int class_id = -1;
  std::string transform;
  std::optional<double> intensity;
  std::optional<std::string> channel;
  std::optional<std::uint64_t> seed;
  std::uint32_t replicate = 0;
  std::uint64_t image_index = 0;
  std::optional<std::string> fill_means;
  bool mask_context = false;
  std::string out;
};

int RunDistort(const DistortArgs& a) {
  DistortionSpec spec;
  try {
    spec.kind = ParseKind(a.transform);
  } catch (const Error& e) {
    throw UsageError(std::string("--transform: ") + e.what());
  }
  spec.class_id = static_cast<ClassId>(a.class_id);
  if (spec.kind == DistortionKind::kColorDuplication) {
    if (!a.channel) throw UsageError("--transform color-dup requires --channel (R, G or B)");
    try {
      spec.channel = ParseChannel(*a.channel);
    } catch (const Error& e) {
      throw UsageError(std::string("--channel: ") + e.what());
    }
  } else if (a.channel) {
    throw UsageError("--channel is only valid with --transform color-dup");
  }
  if (spec.kind == DistortionKind::kContextMask) {
    spec.intensity = a.intensity.value_or(0.0);
  } else if (!a.intensity) {
    throw UsageError("--transform " + a.transform + " requires --intensity");
  } else {
    spec.intensity = *a.intensity;
  }
  const bool needs_fill = spec.kind == DistortionKind::kContextMask || a.mask_context;
  if (needs_fill) {
    if (!a.fill_means) throw UsageError("context masking requires --fill-means r,g,b");
    spec.fill = ParseFillMeans(*a.fill_means);
  } else if (a.fill_means) {
    throw UsageError("--fill-means is only valid with context masking");
  }
  spec.mask_context = a.mask_context && spec.kind != DistortionKind::kContextMask;
  spec.seed = ResolveSeed(a.seed);
  spec.replicate = a.replicate;
  spec.image_index = a.image_index;

  const ImageBuffer image = LoadImage(a.image);
  const LabelMap labels = LoadLabels(a.labels);
  SaveImage(Apply(image, labels, spec), a.out);
  PrintJson({{"out", a.out}, {"spec", json::parse(spec.Canonical())},
             {"digest", spec.Digest()}});
  return kExitOk;
}

// --- stats -----------------------------------------------------------------

int RunStats(const std::string& manifest_path, const std::string& split_name) {
  Split split;
  try {
    split = ParseSplit(split_name);
  } catch (const Error& e) {
    throw UsageError(std::string("--split: ") + e.what());
  }
  const DatasetManifest manifest = LoadManifest(manifest_path);
  const ChannelStats stats = ComputeChannelMeans(manifest, split);
  const auto histogram = ClassPixelHistogram(manifest, split);
  json hist = json::object();
  std::uint64_t total = 0;
  for (const auto& [id, n] : histogram) {
    hist[std::to_string(id)] = n;
    total += n;
  }
  PrintJson({{"split", split_name},
             {"images", manifest.SplitEntries(split).size()},
             {"pixel_count", stats.pixel_count},
             {"channel_means", {{"r", stats.mean_r}, {"g", stats.mean_g}, {"b", stats.mean_b}}},
             {"class_histogram", hist},
             {"histogram_total", total}});
  return kExitOk;
}

// --- sweep / stage / collect ----------------------------------------------

SweepConfig LoadConfigWithOverrides(const std::string& path, std::optional<int> jobs) {
  SweepConfig config = LoadSweepConfig(path);
  if (jobs) {
    if (*jobs < 1) throw UsageError("--jobs must be >= 1");
    config.jobs = *jobs;
  }
  return config;
}

void WriteOutputs(const SweepReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  WriteCsv(report, out_dir / "report.csv");
  WriteProvenance(report, out_dir / "provenance.json");
  if (!report.records.empty()) {
    WriteCharts(ReadCsv(out_dir / "report.csv"), out_dir);
  }
}

json Summary(const SweepReport& report, const fs::path& out_dir) {
  return {{"csv", (out_dir / "report.csv").string()},
          {"records", report.records.size()},
          {"config_digest", report.provenance.config_digest},
          {"seed", report.seed}};
}

int FinishWithPartial(const SweepError& e, const fs::path& out_dir) {
  try {
    WriteOutputs(e.partial(), out_dir);
    std::cerr << "eodistort: partial results (" << e.partial().records.size()
              << " records) written to " << (out_dir / "report.csv").string() << "\n";
  } catch (const std::exception& inner) {
    std::cerr << "eodistort: could not flush partial results: " << inner.what() << "\n";
  }
  std::cerr << "eodistort: " << e.what() << "\n";
  return ExitCodeFor(e);
}

int RunSweepCommand(const std::string& config_path, const fs::path& out_dir,
                    std::optional<int> jobs) {
  const SweepConfig config = LoadConfigWithOverrides(config_path, jobs);
  try {
    const SweepReport report = RunSweep(config);
    WriteOutputs(report, out_dir);
    PrintJson(Summary(report, out_dir));
    return kExitOk;
  } catch (const SweepError& e) {
    return FinishWithPartial(e, out_dir);
  }
}

int RunStageCommand(const std::string& config_path, const fs::path& out_dir,
                    std::optional<int> jobs) {
  const SweepConfig config = LoadConfigWithOverrides(config_path, jobs);
  const fs::path root = out_dir / "staging";
  StageSweep(config, root);
  PrintJson({{"staging", root.string()}});
  return kExitOk;
}

int RunCollectCommand(const std::string& config_path, const fs::path& out_dir,
                      std::optional<int> jobs) {
  const SweepConfig config = LoadConfigWithOverrides(config_path, jobs);
  try {
    const SweepReport report = CollectSweep(config, out_dir / "staging");
    WriteOutputs(report, out_dir);
    PrintJson(Summary(report, out_dir));
    return kExitOk;
  } catch (const SweepError& e) {
    return FinishWithPartial(e, out_dir);
  }
}

// --- evaluate ----------------------------------------------------------------

int RunEvaluate(const std::string& manifest_path, const std::string& split_name,
                const fs::path& pred_dir) {
  Split split;
  try {
    split = ParseSplit(split_name);
  } catch (const Error& e) {
    throw UsageError(std::string("--split: ") + e.what());
  }
  const DatasetManifest manifest = LoadManifest(manifest_path);
  const auto entries = manifest.SplitEntries(split);
  if (entries.empty()) {
    throw Error(ErrorCode::kEmptySplit, "split '" + split_name + "' has no images");
  }
  std::vector<ClassId> ids;
  for (const auto& [id, name] : manifest.class_table) ids.push_back(id);
  ConfusionMatrix cm(ids);
  for (const auto& e : entries) {
    const LabelMap truth = LoadLabels(e.label_path);
    const LabelMap pred = LoadLabels(pred_dir / (e.id() + ".png"));
    cm.Accumulate(truth, pred, manifest.background_id);
  }
  json per_class = json::object();
  for (ClassId id : manifest.TargetClasses()) {
    const auto iou = Iou(cm, id);
    per_class[std::to_string(id)] = {{"name", manifest.ClassName(id)},
                                     {"iou", iou ? json(*iou) : json(nullptr)}};
  }
  PrintJson({{"split", split_name},
             {"images", entries.size()},
             {"evaluated_pixels", cm.total()},
             {"per_class", per_class},
             {"miou", MeanIou(cm, manifest.background_id)}});
  return kExitOk;
}

// --- report ------------------------------------------------------------------

int RunReport(const std::string& csv, const fs::path& out_dir,
              const std::optional<std::string>& compare_csv) {
  const auto rows = ReadCsv(csv);
  if (rows.empty()) throw UsageError("'" + csv + "' has no records");
  std::optional<std::vector<CsvRow>> compare;
  if (compare_csv) compare = ReadCsv(*compare_csv);
  const auto written = WriteCharts(rows, out_dir, compare ? &*compare : nullptr);
  json files = json::array();
  for (const auto& p : written) files.push_back(p.string());
  PrintJson({{"svg", files}});
  return kExitOk;
}

int Main(int argc, char** argv) {
  CLI::App app{"Class-conditional image distortions and segmentation robustness sweeps"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  DistortArgs d;
  auto* distort = app.add_subcommand("distort", "Distort one image for one class");
  distort->add_option("--image", d.image, "RGB PNG to distort")->required();
  distort->add_option("--labels", d.labels, "Label map PNG")->required();
  distort->add_option("--class-id", d.class_id, "Target class id")
      ->required()->check(CLI::Range(0, 255));
  distort->add_option("--transform", d.transform, "gray|pixel-swap|color-dup|context-mask")
      ->required();
  distort->add_option("--intensity", d.intensity, "lambda or p in [0,1]");
  distort->add_option("--channel", d.channel, "R|G|B (color-dup only)");
  distort->add_option("--seed", d.seed, "RNG seed (falls back to EO_DISTORT_SEED)");
  distort->add_option("--replicate", d.replicate, "Pixel-swap replicate index");
  distort->add_option("--image-index", d.image_index, "Image index for stream derivation");
  distort->add_option("--fill-means", d.fill_means, "Context fill 'r,g,b'");
  distort->add_flag("--mask-context", d.mask_context,
                    "Also replace non-class pixels with --fill-means");
  distort->add_option("--out", d.out, "Output PNG")->required();

  std::string manifest;
  std::string split = "val";
  auto* stats = app.add_subcommand("stats", "Channel means and class histogram of a split");
  stats->add_option("--manifest", manifest, "Dataset manifest JSON")->required();
  stats->add_option("--split", split, "train|val|test")->required();

  std::string config;
  std::string out_dir;
  std::optional<int> jobs;
  auto add_sweep_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "Sweep config JSON")->required();
    cmd->add_option("--out-dir", out_dir, "Output directory")->required();
    cmd->add_option("--jobs", jobs, "Worker threads (default: all cores)");
  };
  auto* sweep = app.add_subcommand("sweep", "Run a full distortion sweep");
  add_sweep_flags(sweep);
  auto* stage = app.add_subcommand("stage", "Write distorted images for offline prediction");
  add_sweep_flags(stage);
  auto* collect = app.add_subcommand("collect", "Score offline predictions of a staged sweep");
  add_sweep_flags(collect);

  std::string pred_dir;
  auto* evaluate = app.add_subcommand("evaluate", "Per-class IoU of precomputed predictions");
  evaluate->add_option("--manifest", manifest, "Dataset manifest JSON")->required();
  evaluate->add_option("--split", split, "train|val|test");
  evaluate->add_option("--pred-dir", pred_dir, "Directory of <id>.png predictions")->required();

  std::string csv;
  std::string svg_dir;
  std::optional<std::string> compare_csv;
  auto* report = app.add_subcommand("report", "Render charts from a report CSV");
  report->add_option("--csv", csv, "report.csv")->required();
  report->add_option("--out-svg-dir", svg_dir, "Chart output directory")->required();
  report->add_option("--compare-csv", compare_csv, "CSV whose mean is drawn dashed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cout, std::cerr);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*distort) return RunDistort(d);
    if (*stats) return RunStats(manifest, split);
    if (*sweep) return RunSweepCommand(config, out_dir, jobs);
    if (*stage) return RunStageCommand(config, out_dir, jobs);
    if (*collect) return RunCollectCommand(config, out_dir, jobs);
    if (*evaluate) return RunEvaluate(manifest, split, pred_dir);
    if (*report) return RunReport(csv, svg_dir, compare_csv);
  } catch (const UsageError& e) {
    std::cerr << "eodistort: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "eodistort: " << e.what() << "\n";
    return ExitCodeFor(e);
  } catch (const std::exception& e) {
    std::cerr << "eodistort: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace
}  // namespace eodistort

int main(int argc, char** argv) { return eodistort::Main(argc, argv); }
