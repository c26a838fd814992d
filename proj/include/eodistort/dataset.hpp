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
#ifndef EODISTORT_DATASET_HPP_
#define EODISTORT_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "eodistort/raster.hpp"

namespace eodistort {

enum class Split { kTrain, kVal, kTest };

std::string_view SplitName(Split split);
// Throws kInvalidSpec on anything but train|val|test.
Split ParseSplit(std::string_view name);

struct ManifestEntry {
  std::filesystem::path image_path;
  std::filesystem::path label_path;
  Split split = Split::kVal;

  // Image id used for staging, predictions and RNG ordering: the file stem.
  std::string id() const { return image_path.stem().string(); }
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::map<ClassId, std::string> class_table;
  ClassId background_id = 0;

  // Entries of one split, in manifest order. The position of an entry in
  // this list is its image index for RNG stream derivation.
  std::vector<ManifestEntry> SplitEntries(Split split) const;

  std::string ClassName(ClassId id) const;
  // All non-background ids in ascending order.
  std::vector<ClassId> TargetClasses() const;
};

// 0=background, 1=bare, 2=range, 3=developed, 4=road, 5=tree, 6=water,
// 7=agriculture, 8=building.
std::map<ClassId, std::string> DefaultClassTable();

// Relative image/label paths resolve against the manifest's directory. A
// manifest without "classes" gets DefaultClassTable().
DatasetManifest LoadManifest(const std::filesystem::path& path);
DatasetManifest ParseManifest(std::string_view json_text,
                              const std::filesystem::path& base_dir);

// One human-readable line per problem: unreadable rasters, image/label size
// mismatches, label ids missing from the class table, duplicate image ids,
// and a background id missing from the table. Empty means valid.
std::vector<std::string> ValidateManifest(const DatasetManifest& manifest);

struct ChannelStats {
  double mean_r = 0.0;
  double mean_g = 0.0;
  double mean_b = 0.0;
  std::uint64_t pixel_count = 0;

  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

// Pixel-weighted means over every image of the split. Sums are exact 64-bit
// integers and the division happens once at the end, so the result does not
// depend on entry order.
ChannelStats ComputeChannelMeans(const DatasetManifest& manifest, Split split);
ChannelStats ComputeChannelMeans(const std::vector<ImageBuffer>& images);

std::map<ClassId, std::uint64_t> ClassPixelHistogram(
    const DatasetManifest& manifest, Split split);
std::map<ClassId, std::uint64_t> ClassPixelHistogram(
    const std::vector<LabelMap>& maps);

}  // namespace eodistort

#endif  // EODISTORT_DATASET_HPP_
