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
#ifndef EODISTORT_REPORT_HPP_
#define EODISTORT_REPORT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eodistort/sweep.hpp"

namespace eodistort {

// transform,class_id,class_name,intensity,replicate,iou,split,seed
inline constexpr std::string_view kCsvHeader =
    "transform,class_id,class_name,intensity,replicate,iou,split,seed";

struct CsvRow {
  std::string transform;
  ClassId class_id = 0;
  std::string class_name;
  double intensity = 0.0;
  int replicate = 0;
  std::optional<double> iou;  // empty field when undefined
  std::string split;
  std::uint64_t seed = 0;
};

// Rows are sorted by (transform order of first appearance, class id,
// intensity, replicate); reals carry six decimals.
std::string ToCsv(const SweepReport& report);
void WriteCsv(const SweepReport& report, const std::filesystem::path& path);

std::vector<CsvRow> ParseCsv(std::string_view text);
std::vector<CsvRow> ReadCsv(const std::filesystem::path& path);

struct Series {
  std::string name;
  std::optional<ClassId> class_id;  // nullopt for mean series
  std::vector<double> xs;
  std::vector<std::optional<double>> ys;  // nullopt renders as a gap
};

struct CurveSet {
  std::string transform;
  std::vector<Series> classes;  // ascending class id
  Series mean;
  std::optional<Series> comparison;  // mean of a second run, drawn dashed
};

// Class series average replicates at each intensity; the mean series
// averages the defined class values. Both skip undefined IoUs.
CurveSet BuildCurveSet(const std::vector<CsvRow>& rows, std::string_view transform,
                       const std::vector<CsvRow>* compare = nullptr);
// Transform labels in order of first appearance.
std::vector<std::string> TransformsIn(const std::vector<CsvRow>& rows);

// Standalone SVG 1.1, fixed 800x600 viewBox, byte-deterministic.
std::string RenderSvg(const CurveSet& curves);
void WriteSvg(const CurveSet& curves, const std::filesystem::path& path);

// One <transform>.svg per transform in `rows`; returns the written paths.
std::vector<std::filesystem::path> WriteCharts(
    const std::vector<CsvRow>& rows, const std::filesystem::path& out_dir,
    const std::vector<CsvRow>* compare = nullptr);

// provenance.json next to a report: seed, digest and timestamps.
void WriteProvenance(const SweepReport& report, const std::filesystem::path& path);

}  // namespace eodistort

#endif  // EODISTORT_REPORT_HPP_
