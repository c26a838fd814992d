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
#include "eodistort/dataset.hpp"

#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "eodistort/error.hpp"
#include "json.hpp"

namespace eodistort {

using nlohmann::json;

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "val";
}

Split ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error(ErrorCode::kInvalidSpec,
              "unknown split '" + std::string(name) + "'");
}

std::vector<ManifestEntry> DatasetManifest::SplitEntries(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

std::string DatasetManifest::ClassName(ClassId id) const {
  auto it = class_table.find(id);
  return it == class_table.end() ? std::to_string(id) : it->second;
}

std::vector<ClassId> DatasetManifest::TargetClasses() const {
  std::vector<ClassId> out;
  for (const auto& [id, name] : class_table) {
    if (id != background_id) out.push_back(id);
  }
  return out;
}

std::map<ClassId, std::string> DefaultClassTable() {
  return {{0, "background"}, {1, "bare"},  {2, "range"},
          {3, "developed"},  {4, "road"},  {5, "tree"},
          {6, "water"},      {7, "agriculture"}, {8, "building"}};
}

namespace {

ClassId ParseClassId(const json& value, std::string_view what) {
  std::int64_t id = 0;
  if (value.is_number_integer()) {
    id = value.get<std::int64_t>();
  } else if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    std::size_t used = 0;
    try {
      id = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) {
      throw Error(ErrorCode::kMalformedManifest,
                  std::string(what) + " '" + s + "' is not an integer");
    }
  } else {
    throw Error(ErrorCode::kMalformedManifest,
                std::string(what) + " must be an integer");
  }
  if (id < 0 || id > 255) {
    throw Error(ErrorCode::kMalformedManifest,
                std::string(what) + " " + std::to_string(id) +
                    " outside [0,255]");
  }
  return static_cast<ClassId>(id);
}

std::filesystem::path Resolve(const std::filesystem::path& base,
                              const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

DatasetManifest ParseManifest(std::string_view json_text,
                              const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, e.what());
  }
  if (!doc.is_object()) {
    throw Error(ErrorCode::kMalformedManifest, "top level must be an object");
  }
  DatasetManifest manifest;
  if (doc.contains("classes")) {
    if (!doc["classes"].is_object()) {
      throw Error(ErrorCode::kMalformedManifest, "'classes' must be an object");
    }
    for (const auto& [key, name] : doc["classes"].items()) {
      if (!name.is_string()) {
        throw Error(ErrorCode::kMalformedManifest,
                    "class name for id " + key + " must be a string");
      }
      manifest.class_table[ParseClassId(json(key), "class id")] =
          name.get<std::string>();
    }
  } else {
    manifest.class_table = DefaultClassTable();
  }
  manifest.background_id =
      doc.contains("background_id")
          ? ParseClassId(doc["background_id"], "background_id")
          : ClassId{0};

  if (!doc.contains("entries") || !doc["entries"].is_array()) {
    throw Error(ErrorCode::kMalformedManifest, "'entries' array is required");
  }
  for (const auto& e : doc["entries"]) {
    if (!e.is_object() || !e.contains("image") || !e.contains("labels") ||
        !e["image"].is_string() || !e["labels"].is_string()) {
      throw Error(ErrorCode::kMalformedManifest,
                  "each entry needs string 'image' and 'labels' fields");
    }
    ManifestEntry entry;
    entry.image_path = Resolve(base_dir, e["image"].get<std::string>());
    entry.label_path = Resolve(base_dir, e["labels"].get<std::string>());
    const std::string split =
        e.contains("split") && e["split"].is_string()
            ? e["split"].get<std::string>()
            : std::string();
    try {
      entry.split = ParseSplit(split);
    } catch (const Error&) {
      throw Error(ErrorCode::kMalformedManifest,
                  "entry " + entry.image_path.string() +
                      " has invalid split '" + split + "'");
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

DatasetManifest LoadManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kMissingFile,
                "cannot read manifest '" + path.string() + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseManifest(buffer.str(), path.parent_path());
}

std::vector<std::string> ValidateManifest(const DatasetManifest& manifest) {
  std::vector<std::string> violations;
  if (!manifest.class_table.contains(manifest.background_id)) {
    violations.push_back("background id " +
                         std::to_string(manifest.background_id) +
                         " is not in the class table");
  }
  std::set<std::pair<Split, std::string>> seen_ids;
  for (const auto& entry : manifest.entries) {
    if (!seen_ids.emplace(entry.split, entry.id()).second) {
      violations.push_back("duplicate image id '" + entry.id() + "' in split " +
                           std::string(SplitName(entry.split)) + " (" +
                           entry.image_path.string() + ")");
    }
    ImageBuffer image;
    LabelMap labels;
    try {
      image = LoadImage(entry.image_path);
    } catch (const Error& e) {
      violations.push_back(e.what());
      continue;
    }
    try {
      labels = LoadLabels(entry.label_path);
    } catch (const Error& e) {
      violations.push_back(e.what());
      continue;
    }
    if (image.width() != labels.width() || image.height() != labels.height()) {
      violations.push_back(
          "dimension mismatch: " + entry.image_path.string() + " is " +
          std::to_string(image.width()) + "x" + std::to_string(image.height()) +
          " but " + entry.label_path.string() + " is " +
          std::to_string(labels.width()) + "x" +
          std::to_string(labels.height()));
    }
    std::array<bool, 256> present{};
    for (ClassId id : labels.labels()) present[id] = true;
    for (std::size_t id = 0; id < present.size(); ++id) {
      if (present[id] &&
          !manifest.class_table.contains(static_cast<ClassId>(id))) {
        violations.push_back("unknown class id " + std::to_string(id) +
                             " in " + entry.label_path.string());
      }
    }
  }
  return violations;
}

ChannelStats ComputeChannelMeans(const std::vector<ImageBuffer>& images) {
  std::uint64_t sum_r = 0;
  std::uint64_t sum_g = 0;
  std::uint64_t sum_b = 0;
  std::uint64_t count = 0;
  for (const auto& image : images) {
    for (const Rgb& px : image.pixels()) {
      sum_r += px.r;
      sum_g += px.g;
      sum_b += px.b;
    }
    count += image.size();
  }
  if (count == 0) {
    throw Error(ErrorCode::kEmptySplit, "no pixels to average");
  }
  const auto n = static_cast<double>(count);
  return {static_cast<double>(sum_r) / n, static_cast<double>(sum_g) / n,
          static_cast<double>(sum_b) / n, count};
}

ChannelStats ComputeChannelMeans(const DatasetManifest& manifest,
                                 Split split) {
  const auto entries = manifest.SplitEntries(split);
  if (entries.empty()) {
    throw Error(ErrorCode::kEmptySplit,
                "split '" + std::string(SplitName(split)) + "' has no images");
  }
  // Accumulate one image at a time so large splits never sit in memory.
  std::uint64_t sums[3] = {0, 0, 0};
  std::uint64_t count = 0;
  for (const auto& entry : entries) {
    const ImageBuffer image = LoadImage(entry.image_path);
    for (const Rgb& px : image.pixels()) {
      sums[0] += px.r;
      sums[1] += px.g;
      sums[2] += px.b;
    }
    count += image.size();
  }
  if (count == 0) {
    throw Error(ErrorCode::kEmptySplit,
                "split '" + std::string(SplitName(split)) + "' has no pixels");
  }
  const auto n = static_cast<double>(count);
  return {static_cast<double>(sums[0]) / n, static_cast<double>(sums[1]) / n,
          static_cast<double>(sums[2]) / n, count};
}

std::map<ClassId, std::uint64_t> ClassPixelHistogram(
    const std::vector<LabelMap>& maps) {
  std::array<std::uint64_t, 256> counts{};
  for (const auto& map : maps) {
    for (ClassId id : map.labels()) ++counts[id];
  }
  std::map<ClassId, std::uint64_t> out;
  for (std::size_t id = 0; id < counts.size(); ++id) {
    if (counts[id] != 0) out[static_cast<ClassId>(id)] = counts[id];
  }
  return out;
}

std::map<ClassId, std::uint64_t> ClassPixelHistogram(
    const DatasetManifest& manifest, Split split) {
  const auto entries = manifest.SplitEntries(split);
  if (entries.empty()) {
    throw Error(ErrorCode::kEmptySplit,
                "split '" + std::string(SplitName(split)) + "' has no images");
  }
  std::map<ClassId, std::uint64_t> out;
  for (const auto& entry : entries) {
    for (const auto& [id, n] : ClassPixelHistogram({LoadLabels(entry.label_path)})) {
      out[id] += n;
    }
  }
  return out;
}

}  // namespace eodistort
