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
#include "eodistort/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <mutex>
#include <semaphore>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace eodistort {

using nlohmann::json;

std::vector<double> DefaultIntensityGrid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

std::string TransformSpec::Label() const {
  std::string label(KindName(kind));
  if (kind == DistortionKind::kColorDuplication && channel) {
    label += "-";
    label += static_cast<char>(std::tolower(ChannelName(*channel)[0]));
  }
  return label;
}

std::vector<TransformSpec> DefaultTransforms() {
  return {
      {DistortionKind::kGrayScale, std::nullopt, DefaultIntensityGrid(), 1},
      {DistortionKind::kPixelSwap, std::nullopt, DefaultIntensityGrid(),
       kDefaultSwapReplicates},
      {DistortionKind::kColorDuplication, Channel::kR, DefaultIntensityGrid(), 1},
      {DistortionKind::kContextMask, std::nullopt, {1.0}, 1},
  };
}

std::string FormatIntensity(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

std::filesystem::path CellPath(const TransformSpec& transform, ClassId class_id,
                               double intensity, int replicate) {
  return std::filesystem::path(transform.Label()) / std::to_string(class_id) /
         FormatIntensity(intensity) / std::to_string(replicate);
}

// ---------------------------------------------------------------------------
// Config

namespace {

[[noreturn]] void ConfigError(const std::string& message) {
  throw Error(ErrorCode::kMalformedConfig, message);
}

void RejectUnknownKeys(const json& obj, std::initializer_list<const char*> keys,
                       const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(keys.begin(), keys.end(),
                     [&key](const char* k) { return key == k; })) {
      ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

ClassId ToClassId(const json& v, const std::string& what) {
  std::int64_t id = -1;
  if (v.is_number_integer()) {
    id = v.get<std::int64_t>();
  } else if (v.is_string()) {
    try {
      std::size_t used = 0;
      id = std::stoll(v.get<std::string>(), &used);
      if (used != v.get<std::string>().size()) id = -1;
    } catch (const std::exception&) {
      id = -1;
    }
  }
  if (id < 0 || id > 255) ConfigError(what + " must be an integer in [0,255]");
  return static_cast<ClassId>(id);
}

Rgb ToRgb(const json& v, const std::string& what) {
  if (!v.is_array() || v.size() != 3) ConfigError(what + " must be [r,g,b]");
  std::uint8_t c[3];
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number_integer() || v[i].get<int>() < 0 || v[i].get<int>() > 255) {
      ConfigError(what + " channels must be integers in [0,255]");
    }
    c[i] = static_cast<std::uint8_t>(v[i].get<int>());
  }
  return {c[0], c[1], c[2]};
}

std::filesystem::path ResolvePath(const std::filesystem::path& base,
                                  const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative()) path = base / path;
  return std::filesystem::absolute(path).lexically_normal();
}

template <typename T>
T Get(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    ConfigError("'" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

PredictorSpec ParsePredictor(const json& p, const std::filesystem::path& base) {
  if (!p.is_object() || !p.contains("kind") || !p["kind"].is_string()) {
    ConfigError("predictor needs a string 'kind'");
  }
  PredictorSpec spec;
  const auto kind = p["kind"].get<std::string>();
  if (kind == "oracle") {
    RejectUnknownKeys(p, {"kind"}, "predictor");
    spec.kind = PredictorSpec::Kind::kOracle;
  } else if (kind == "nearest-color") {
    RejectUnknownKeys(p, {"kind", "centroids"}, "predictor");
    spec.kind = PredictorSpec::Kind::kNearestColor;
    if (!p.contains("centroids") || !p["centroids"].is_object() ||
        p["centroids"].empty()) {
      ConfigError("nearest-color predictor needs a non-empty 'centroids' object");
    }
    for (const auto& [id, rgb] : p["centroids"].items()) {
      spec.centroids[ToClassId(json(id), "centroid id")] =
          ToRgb(rgb, "centroid " + id);
    }
  } else if (kind == "constant") {
    RejectUnknownKeys(p, {"kind", "class_id"}, "predictor");
    spec.kind = PredictorSpec::Kind::kConstant;
    if (!p.contains("class_id")) ConfigError("constant predictor needs 'class_id'");
    spec.class_id = ToClassId(p["class_id"], "class_id");
  } else if (kind == "variance") {
    RejectUnknownKeys(p, {"kind", "threshold", "window", "low_class", "high_class"},
                      "predictor");
    spec.kind = PredictorSpec::Kind::kVariance;
    spec.variance.threshold = Get<double>(p, "threshold", "predictor");
    spec.variance.window = p.contains("window") ? Get<int>(p, "window", "predictor") : 3;
    if (!p.contains("low_class") || !p.contains("high_class")) {
      ConfigError("variance predictor needs 'low_class' and 'high_class'");
    }
    spec.variance.low_class = ToClassId(p["low_class"], "low_class");
    spec.variance.high_class = ToClassId(p["high_class"], "high_class");
  } else if (kind == "external") {
    RejectUnknownKeys(p, {"kind", "command", "staging_dir", "timeout_s"},
                      "predictor");
    spec.kind = PredictorSpec::Kind::kExternal;
    spec.command = Get<std::string>(p, "command", "predictor");
    spec.staging_dir = ResolvePath(
        base, p.contains("staging_dir")
                  ? Get<std::string>(p, "staging_dir", "predictor")
                  : std::string("predictor_staging"));
    if (p.contains("timeout_s")) {
      const auto t = Get<std::int64_t>(p, "timeout_s", "predictor");
      if (t <= 0) ConfigError("timeout_s must be positive");
      spec.timeout = std::chrono::seconds(t);
    }
  } else {
    ConfigError("unknown predictor kind '" + kind + "'");
  }
  return spec;
}

std::string_view PredictorKindName(PredictorSpec::Kind kind) {
  switch (kind) {
    case PredictorSpec::Kind::kOracle: return "oracle";
    case PredictorSpec::Kind::kNearestColor: return "nearest-color";
    case PredictorSpec::Kind::kConstant: return "constant";
    case PredictorSpec::Kind::kVariance: return "variance";
    case PredictorSpec::Kind::kExternal: return "external";
  }
  return "oracle";
}

std::optional<std::uint64_t> SeedFromEnvironment() {
  const char* env = std::getenv("EO_DISTORT_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || end == env || *end != '\0') {
    ConfigError(std::string("EO_DISTORT_SEED='") + env + "' is not an integer");
  }
  return v;
}

// Everything that determines the distorted images, in canonical form.
json DistortionJson(const SweepConfig& c) {
  json transforms = json::array();
  for (const auto& t : c.transforms) {
    json jt{{"kind", KindName(t.kind)}, {"grid", t.grid}, {"replicates", t.replicates}};
    if (t.channel) jt["channel"] = ChannelName(*t.channel);
    transforms.push_back(jt);
  }
  json doc{{"manifest", c.manifest_path.string()},
           {"split", SplitName(c.split)},
           {"seed", c.seed},
           {"transforms", transforms},
           {"classes", c.classes},
           {"context_masking", c.context_masking}};
  if (c.fill_means) {
    doc["fill"] = {{"means",
                    {c.fill_means->mean_r, c.fill_means->mean_g, c.fill_means->mean_b}}};
  } else {
    doc["fill"] = {{"split", SplitName(c.fill_split)}};
  }
  return doc;
}

}  // namespace

void SweepConfig::Validate() const {
  if (transforms.empty()) ConfigError("no transforms configured");
  std::set<std::string> labels;
  for (const auto& t : transforms) {
    if (!labels.insert(t.Label()).second) {
      ConfigError("transform '" + t.Label() + "' listed twice");
    }
    if ((t.kind == DistortionKind::kColorDuplication) != t.channel.has_value()) {
      ConfigError(t.kind == DistortionKind::kColorDuplication
                      ? "color-dup transform needs a channel"
                      : "channel given for non color-dup transform '" +
                            t.Label() + "'");
    }
    if (t.grid.empty()) ConfigError("empty intensity grid for " + t.Label());
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
      if (!(t.grid[i] >= 0.0 && t.grid[i] <= 1.0)) {
        ConfigError("intensity " + FormatIntensity(t.grid[i]) + " of " +
                    t.Label() + " is outside [0,1]");
      }
      if (i > 0 && !(t.grid[i] > t.grid[i - 1])) {
        ConfigError("grid of " + t.Label() + " must be strictly ascending");
      }
    }
    if (t.replicates < 1) ConfigError("replicates must be >= 1");
    if (t.kind != DistortionKind::kPixelSwap && t.replicates != 1) {
      ConfigError("deterministic transform '" + t.Label() +
                  "' must have exactly 1 replicate");
    }
  }
  if (jobs < 0) ConfigError("jobs must be >= 0");
  if (max_external < 1) ConfigError("max_external must be >= 1");
  if (predictor.kind == PredictorSpec::Kind::kVariance &&
      (predictor.variance.window < 3 || predictor.variance.window % 2 == 0)) {
    ConfigError("variance window must be odd and >= 3");
  }
  if (predictor.kind == PredictorSpec::Kind::kExternal &&
      (predictor.command.find("{input_dir}") == std::string::npos ||
       predictor.command.find("{output_dir}") == std::string::npos)) {
    ConfigError("external command must contain {input_dir} and {output_dir}");
  }
  if (fill_means) {
    for (double m : {fill_means->mean_r, fill_means->mean_g, fill_means->mean_b}) {
      if (!(m >= 0.0 && m <= 255.0)) ConfigError("fill means must lie in [0,255]");
    }
  }
}

std::string SweepConfig::CanonicalJson() const {
  json doc = DistortionJson(*this);
  json p{{"kind", PredictorKindName(predictor.kind)}};
  switch (predictor.kind) {
    case PredictorSpec::Kind::kNearestColor: {
      json c = json::object();
      for (const auto& [id, rgb] : predictor.centroids) {
        c[std::to_string(id)] = {rgb.r, rgb.g, rgb.b};
      }
      p["centroids"] = c;
      break;
    }
    case PredictorSpec::Kind::kConstant:
      p["class_id"] = predictor.class_id;
      break;
    case PredictorSpec::Kind::kVariance:
      p["threshold"] = predictor.variance.threshold;
      p["window"] = predictor.variance.window;
      p["low_class"] = predictor.variance.low_class;
      p["high_class"] = predictor.variance.high_class;
      break;
    case PredictorSpec::Kind::kExternal:
      p["command"] = predictor.command;
      break;
    case PredictorSpec::Kind::kOracle:
      break;
  }
  doc["predictor"] = p;
  return doc.dump();
}

std::string SweepConfig::Digest() const { return Hex64(Fnv1a64(CanonicalJson())); }

SweepConfig ParseSweepConfig(std::string_view json_text,
                             const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    ConfigError(e.what());
  }
  if (!doc.is_object()) ConfigError("sweep config must be a JSON object");
  RejectUnknownKeys(doc,
                    {"manifest", "split", "seed", "transforms", "classes",
                     "predictor", "context_masking", "fill", "jobs",
                     "max_external", "batch_size"},
                    "sweep config");
  SweepConfig config;
  if (!doc.contains("manifest")) ConfigError("'manifest' is required");
  config.manifest_path =
      ResolvePath(base_dir, Get<std::string>(doc, "manifest", "sweep config"));
  try {
    if (doc.contains("split")) {
      config.split = ParseSplit(Get<std::string>(doc, "split", "sweep config"));
    }
  } catch (const Error& e) {
    ConfigError(e.what());
  }
  if (doc.contains("seed")) {
    config.seed = Get<std::uint64_t>(doc, "seed", "sweep config");
  } else if (auto env = SeedFromEnvironment()) {
    config.seed = *env;
  }
  if (doc.contains("transforms")) {
    if (!doc["transforms"].is_array()) ConfigError("'transforms' must be an array");
    config.transforms.clear();
    for (const auto& jt : doc["transforms"]) {
      if (!jt.is_object()) ConfigError("each transform must be an object");
      RejectUnknownKeys(jt, {"kind", "channel", "grid", "replicates"}, "transform");
      TransformSpec t;
      try {
        t.kind = ParseKind(Get<std::string>(jt, "kind", "transform"));
        if (jt.contains("channel")) {
          t.channel = ParseChannel(Get<std::string>(jt, "channel", "transform"));
        }
      } catch (const Error& e) {
        ConfigError(e.what());
      }
      t.grid = t.kind == DistortionKind::kContextMask ? std::vector<double>{1.0}
                                                      : DefaultIntensityGrid();
      if (jt.contains("grid")) t.grid = Get<std::vector<double>>(jt, "grid", "transform");
      t.replicates = t.kind == DistortionKind::kPixelSwap ? kDefaultSwapReplicates : 1;
      if (jt.contains("replicates")) {
        t.replicates = Get<int>(jt, "replicates", "transform");
      }
      config.transforms.push_back(std::move(t));
    }
  }
  if (doc.contains("classes")) {
    if (!doc["classes"].is_array()) ConfigError("'classes' must be an array");
    for (const auto& c : doc["classes"]) config.classes.push_back(ToClassId(c, "class"));
  }
  if (doc.contains("predictor")) {
    config.predictor = ParsePredictor(doc["predictor"], base_dir);
  }
  if (doc.contains("context_masking")) {
    config.context_masking = Get<bool>(doc, "context_masking", "sweep config");
  }
  if (doc.contains("fill")) {
    const json& f = doc["fill"];
    if (!f.is_object()) ConfigError("'fill' must be an object");
    RejectUnknownKeys(f, {"split", "means"}, "fill");
    if (f.contains("means")) {
      const auto m = Get<std::vector<double>>(f, "means", "fill");
      if (m.size() != 3) ConfigError("fill means must have three components");
      config.fill_means = ChannelStats{m[0], m[1], m[2], 0};
    } else if (f.contains("split")) {
      try {
        config.fill_split = ParseSplit(Get<std::string>(f, "split", "fill"));
      } catch (const Error& e) {
        ConfigError(e.what());
      }
    }
  }
  if (doc.contains("jobs")) config.jobs = Get<int>(doc, "jobs", "sweep config");
  if (doc.contains("max_external")) {
    config.max_external = Get<int>(doc, "max_external", "sweep config");
  }
  if (doc.contains("batch_size")) {
    config.batch_size = Get<std::size_t>(doc, "batch_size", "sweep config");
  }
  config.Validate();
  return config;
}

SweepConfig LoadSweepConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kMissingFile,
                "cannot read sweep config '" + path.string() + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseSweepConfig(buffer.str(),
                          std::filesystem::absolute(path).parent_path());
}

SweepError::SweepError(const Error& cause, std::string tag, SweepReport partial)
    : Error(cause.code(), "[" + tag + "] " + cause.what()),
      tag_(std::move(tag)),
      partial_(std::move(partial)) {}

// ---------------------------------------------------------------------------
// Execution

namespace {

std::string UtcNow() {
  const std::time_t t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Cell {
  std::size_t transform_index = 0;
  ClassId class_id = 0;
  double intensity = 0.0;
  int replicate = 0;
  std::size_t unit = 0;  // index of the evaluation that produces this cell
};

// One distinct set of distorted images to predict on. Identity cells of all
// transforms share a unit (per class when context masking is on).
struct Unit {
  DistortionSpec spec;
  std::string tag;
};

struct SweepPlan {
  DatasetManifest manifest;
  std::vector<ManifestEntry> entries;
  std::vector<ClassId> classes;
  std::vector<ClassId> table_ids;
  std::optional<ChannelStats> fill;
  std::vector<Cell> cells;
  std::vector<Unit> units;
};

std::string CellTag(const SweepConfig& config, const Cell& cell) {
  return "transform=" + config.transforms[cell.transform_index].Label() +
         " class=" + std::to_string(cell.class_id) +
         " intensity=" + FormatIntensity(cell.intensity) +
         " replicate=" + std::to_string(cell.replicate);
}

bool IsIdentity(const TransformSpec& t, double intensity) {
  return t.kind != DistortionKind::kContextMask && intensity == 0.0;
}

SweepPlan MakePlan(const SweepConfig& config, bool share_baseline) {
  config.Validate();
  SweepPlan plan;
  plan.manifest = LoadManifest(config.manifest_path);
  const auto& m = plan.manifest;
  if (!m.class_table.contains(m.background_id)) {
    throw Error(ErrorCode::kMalformedManifest,
                "background id is not in the class table");
  }
  plan.entries = m.SplitEntries(config.split);
  if (plan.entries.empty()) {
    throw Error(ErrorCode::kEmptySplit, "split '" +
                                            std::string(SplitName(config.split)) +
                                            "' has no images");
  }
  std::set<std::string> ids;
  for (const auto& e : plan.entries) {
    if (!ids.insert(e.id()).second) {
      throw Error(ErrorCode::kMalformedManifest,
                  "duplicate image id '" + e.id() + "' in split");
    }
  }
  plan.classes = config.classes.empty() ? m.TargetClasses() : config.classes;
  std::sort(plan.classes.begin(), plan.classes.end());
  plan.classes.erase(std::unique(plan.classes.begin(), plan.classes.end()),
                     plan.classes.end());
  for (ClassId c : plan.classes) {
    if (!m.class_table.contains(c)) {
      throw Error(ErrorCode::kMalformedConfig,
                  "class " + std::to_string(c) + " is not in the class table");
    }
    if (c == m.background_id) {
      throw Error(ErrorCode::kMalformedConfig,
                  "the background class cannot be a sweep target");
    }
  }
  if (plan.classes.empty()) {
    throw Error(ErrorCode::kMalformedConfig, "no target classes");
  }
  for (const auto& [id, name] : m.class_table) plan.table_ids.push_back(id);

  const bool needs_fill =
      config.context_masking ||
      std::any_of(config.transforms.begin(), config.transforms.end(),
                  [](const TransformSpec& t) {
                    return t.kind == DistortionKind::kContextMask;
                  });
  if (needs_fill) {
    plan.fill = config.fill_means ? *config.fill_means
                                  : ComputeChannelMeans(m, config.fill_split);
  }

  std::map<int, std::size_t> baseline_units;  // class id (or -1) -> unit
  for (std::size_t ti = 0; ti < config.transforms.size(); ++ti) {
    const auto& t = config.transforms[ti];
    for (ClassId c : plan.classes) {
      for (double x : t.grid) {
        for (int r = 0; r < t.replicates; ++r) {
          Cell cell{ti, c, x, r, 0};
          DistortionSpec spec;
          spec.kind = t.kind;
          spec.class_id = c;
          spec.intensity = x;
          spec.channel = t.channel;
          spec.seed = config.seed;
          spec.replicate = static_cast<std::uint32_t>(r);
          spec.mask_context =
              config.context_masking && t.kind != DistortionKind::kContextMask;
          if (spec.mask_context || t.kind == DistortionKind::kContextMask) {
            spec.fill = plan.fill;
          }
          if (share_baseline && IsIdentity(t, x)) {
            const int key = config.context_masking ? c : -1;
            auto it = baseline_units.find(key);
            if (it == baseline_units.end()) {
              DistortionSpec base;
              base.kind = DistortionKind::kGrayScale;
              base.class_id = c;
              base.seed = config.seed;
              base.mask_context = config.context_masking;
              if (config.context_masking) base.fill = plan.fill;
              plan.units.push_back({base, CellTag(config, cell)});
              it = baseline_units.emplace(key, plan.units.size() - 1).first;
            }
            cell.unit = it->second;
          } else {
            plan.units.push_back({spec, CellTag(config, cell)});
            cell.unit = plan.units.size() - 1;
          }
          plan.cells.push_back(cell);
        }
      }
    }
  }
  return plan;
}

struct Failure {
  Error error;
  std::string tag;
};

Failure ToFailure(const std::exception& e, std::string tag) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return {*err, std::move(tag)};
  return {Error(ErrorCode::kIoFailure, e.what()), std::move(tag)};
}

// Runs task(i) for i in [0, n) on `jobs` threads. Stops handing out work
// after the first failure; returns the failure with the lowest index.
std::optional<Failure> ParallelFor(
    std::size_t n, int jobs,
    const std::function<std::optional<Failure>(std::size_t)>& task) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::map<std::size_t, Failure> failures;
  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      if (auto f = task(i)) {
        std::lock_guard<std::mutex> guard(mu);
        failures.emplace(i, std::move(*f));
        stop.store(true);
      }
    }
  };
  const std::size_t threads =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failures.empty()) return std::nullopt;
  return std::move(failures.begin()->second);
}

int EffectiveJobs(int jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Distorted images of one unit for entries [begin, end).
std::vector<BatchItem> DistortRange(const SweepPlan& plan, const Unit& unit,
                                    std::size_t begin, std::size_t end,
                                    std::vector<LabelMap>* truths,
                                    std::string* current_id) {
  std::vector<BatchItem> items;
  items.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& entry = plan.entries[i];
    *current_id = entry.id();
    ImageBuffer image = LoadImage(entry.image_path);
    LabelMap labels = LoadLabels(entry.label_path);
    CheckSameShape(image, labels);
    DistortionSpec spec = unit.spec;
    spec.image_index = i;
    items.push_back({entry.id(), Apply(image, labels, spec)});
    if (truths != nullptr) truths->push_back(std::move(labels));
  }
  return items;
}

std::vector<SweepRecord> BuildRecords(
    const SweepConfig& config, const SweepPlan& plan,
    const std::vector<std::optional<ConfusionMatrix>>& cell_matrices) {
  std::vector<SweepRecord> records;
  for (std::size_t i = 0; i < plan.cells.size(); ++i) {
    if (!cell_matrices[i]) continue;
    const Cell& cell = plan.cells[i];
    const ConfusionMatrix& cm = *cell_matrices[i];
    SweepRecord rec;
    rec.transform = config.transforms[cell.transform_index].Label();
    rec.class_id = cell.class_id;
    rec.class_name = plan.manifest.ClassName(cell.class_id);
    rec.intensity = cell.intensity;
    rec.replicate = cell.replicate;
    rec.iou = Iou(cm, cell.class_id);
    rec.true_positives = cm.TruePositives(cell.class_id);
    rec.false_positives = cm.FalsePositives(cell.class_id);
    rec.false_negatives = cm.FalseNegatives(cell.class_id);
    records.push_back(std::move(rec));
  }

  // Replicates are averaged per class first, then classes are averaged.
  std::map<std::pair<std::string, double>, std::map<ClassId, std::pair<double, int>>>
      sums;
  for (const auto& rec : records) {
    auto& slot = sums[{rec.transform, rec.intensity}][rec.class_id];
    if (rec.iou) {
      slot.first += *rec.iou;
      ++slot.second;
    }
  }
  for (auto& rec : records) {
    double total = 0.0;
    int defined = 0;
    for (const auto& [cls, s] : sums[{rec.transform, rec.intensity}]) {
      if (s.second == 0) continue;
      total += s.first / s.second;
      ++defined;
    }
    if (defined > 0) rec.mean_iou = total / defined;
  }
  return records;
}

SweepReport MakeReport(const SweepConfig& config, std::string started) {
  SweepReport report;
  report.split = config.split;
  report.seed = config.seed;
  report.provenance.seed = config.seed;
  report.provenance.config_digest = config.Digest();
  report.provenance.started_at = std::move(started);
  return report;
}

PredictorHandle BuildHandle(const SweepConfig& config, const SweepPlan& plan,
                            std::size_t unit_index) {
  const auto& p = config.predictor;
  switch (p.kind) {
    case PredictorSpec::Kind::kOracle: {
      std::map<std::string, LabelMap> truth;
      for (const auto& e : plan.entries) truth[e.id()] = LoadLabels(e.label_path);
      return PredictorHandle::Oracle(std::move(truth));
    }
    case PredictorSpec::Kind::kNearestColor:
      return PredictorHandle::NearestColor(p.centroids);
    case PredictorSpec::Kind::kConstant:
      return PredictorHandle::ConstantClass(p.class_id);
    case PredictorSpec::Kind::kVariance:
      return PredictorHandle(p.variance);
    case PredictorSpec::Kind::kExternal: {
      char name[32];
      std::snprintf(name, sizeof(name), "unit-%06zu", unit_index);
      return PredictorHandle::External(p.command, p.staging_dir / name, p.timeout);
    }
  }
  return PredictorHandle::ConstantClass(0);
}

}  // namespace

SweepReport RunSweep(const SweepConfig& config) {
  const std::string started = UtcNow();
  const SweepPlan plan = MakePlan(config, /*share_baseline=*/true);
  const std::size_t batch =
      config.batch_size == 0 ? plan.entries.size() : config.batch_size;

  // Built-in predictors are shared; the oracle loads its labels once.
  std::optional<PredictorHandle> shared;
  if (config.predictor.kind != PredictorSpec::Kind::kExternal) {
    shared.emplace(BuildHandle(config, plan, 0));
  }
  std::counting_semaphore<> external_slots(config.max_external);

  std::vector<std::optional<ConfusionMatrix>> unit_matrices(plan.units.size());
  auto failure = ParallelFor(
      plan.units.size(), EffectiveJobs(config.jobs),
      [&](std::size_t u) -> std::optional<Failure> {
        const Unit& unit = plan.units[u];
        std::string image_id;
        try {
          const PredictorHandle handle =
              shared ? *shared : BuildHandle(config, plan, u);
          ConfusionMatrix cm(plan.table_ids);
          for (std::size_t begin = 0; begin < plan.entries.size(); begin += batch) {
            const std::size_t end = std::min(plan.entries.size(), begin + batch);
            std::vector<LabelMap> truths;
            auto items = DistortRange(plan, unit, begin, end, &truths, &image_id);
            image_id = end - begin == 1
                           ? items.front().id
                           : items.front().id + ".." + items.back().id;
            std::vector<Prediction> preds;
            if (handle.is_external()) {
              external_slots.acquire();
              try {
                preds = handle.PredictBatch(items);
              } catch (...) {
                external_slots.release();
                throw;
              }
              external_slots.release();
            } else {
              preds = handle.PredictBatch(items);
            }
            for (std::size_t k = 0; k < preds.size(); ++k) {
              image_id = items[k].id;
              cm.Accumulate(truths[k], preds[k].labels, plan.manifest.background_id);
            }
          }
          unit_matrices[u] = std::move(cm);
          return std::nullopt;
        } catch (const std::exception& e) {
          return ToFailure(e, unit.tag + " image=" + image_id);
        }
      });

  std::vector<std::optional<ConfusionMatrix>> cell_matrices(plan.cells.size());
  for (std::size_t i = 0; i < plan.cells.size(); ++i) {
    cell_matrices[i] = unit_matrices[plan.cells[i].unit];
  }
  SweepReport report = MakeReport(config, started);
  report.records = BuildRecords(config, plan, cell_matrices);
  report.provenance.finished_at = UtcNow();
  if (failure) throw SweepError(failure->error, failure->tag, std::move(report));
  return report;
}

void StageSweep(const SweepConfig& config, const std::filesystem::path& root) {
  const SweepPlan plan = MakePlan(config, /*share_baseline=*/false);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) {
    throw Error(ErrorCode::kIoFailure,
                "cannot create staging root '" + root.string() + "'");
  }
  auto failure = ParallelFor(
      plan.cells.size(), EffectiveJobs(config.jobs),
      [&](std::size_t i) -> std::optional<Failure> {
        const Cell& cell = plan.cells[i];
        const Unit& unit = plan.units[cell.unit];
        std::string image_id;
        try {
          const auto dir = root / CellPath(config.transforms[cell.transform_index],
                                           cell.class_id, cell.intensity,
                                           cell.replicate);
          std::filesystem::remove_all(dir);
          std::filesystem::create_directories(dir / "output_dir");
          auto items = DistortRange(plan, unit, 0, plan.entries.size(), nullptr,
                                    &image_id);
          WriteBatch(dir / "input_dir", items);
          std::filesystem::copy_file(dir / "input_dir" / "batch.json",
                                     dir / "batch.json",
                                     std::filesystem::copy_options::overwrite_existing);
          return std::nullopt;
        } catch (const std::exception& e) {
          return ToFailure(e, unit.tag + " image=" + image_id);
        }
      });
  if (failure) throw SweepError(failure->error, failure->tag, SweepReport{});

  json marker{{"config_digest", Hex64(Fnv1a64(DistortionJson(config).dump()))},
              {"cells", plan.cells.size()},
              {"images", plan.entries.size()}};
  std::ofstream out(root / "sweep.json", std::ios::binary);
  out << marker.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write sweep.json");
}

SweepReport CollectSweep(const SweepConfig& config,
                         const std::filesystem::path& root) {
  const std::string started = UtcNow();
  const SweepPlan plan = MakePlan(config, /*share_baseline=*/false);

  json marker;
  {
    std::ifstream in(root / "sweep.json");
    if (!in) {
      throw Error(ErrorCode::kMissingFile,
                  "no staged sweep at '" + root.string() + "'");
    }
    try {
      marker = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedConfig,
                  std::string("bad sweep.json: ") + e.what());
    }
  }
  const std::string expected = Hex64(Fnv1a64(DistortionJson(config).dump()));
  if (marker.value("config_digest", std::string()) != expected) {
    throw Error(ErrorCode::kMalformedConfig,
                "staging tree at '" + root.string() +
                    "' was produced by a different sweep config");
  }

  std::vector<std::string> missing;
  for (const Cell& cell : plan.cells) {
    const auto rel = CellPath(config.transforms[cell.transform_index],
                              cell.class_id, cell.intensity, cell.replicate);
    for (const auto& e : plan.entries) {
      std::error_code ec;
      if (!std::filesystem::is_regular_file(
              root / rel / "output_dir" / (e.id() + ".png"), ec)) {
        missing.push_back((rel / "output_dir" / e.id()).string());
      }
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::kMissingPrediction,
                std::to_string(missing.size()) + " missing prediction(s): " + list);
  }

  std::map<std::string, LabelMap> truth;
  for (const auto& e : plan.entries) truth[e.id()] = LoadLabels(e.label_path);

  std::vector<std::optional<ConfusionMatrix>> cell_matrices(plan.cells.size());
  auto failure = ParallelFor(
      plan.cells.size(), EffectiveJobs(config.jobs),
      [&](std::size_t i) -> std::optional<Failure> {
        const Cell& cell = plan.cells[i];
        const auto dir = root / CellPath(config.transforms[cell.transform_index],
                                         cell.class_id, cell.intensity,
                                         cell.replicate);
        try {
          std::vector<StagedImage> staged;
          for (const auto& e : plan.entries) {
            const auto& t = truth.at(e.id());
            staged.push_back({e.id(), t.width(), t.height()});
          }
          const auto preds = CollectBatch(dir / "output_dir", staged);
          ConfusionMatrix cm(plan.table_ids);
          for (const auto& p : preds) {
            cm.Accumulate(truth.at(p.id), p.labels, plan.manifest.background_id);
          }
          cell_matrices[i] = std::move(cm);
          return std::nullopt;
        } catch (const std::exception& e) {
          return ToFailure(e, plan.units[cell.unit].tag);
        }
      });

  SweepReport report = MakeReport(config, started);
  report.records = BuildRecords(config, plan, cell_matrices);
  report.provenance.finished_at = UtcNow();
  if (failure) throw SweepError(failure->error, failure->tag, std::move(report));
  return report;
}

}  // namespace eodistort
