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
#include "eodistort/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "eodistort/error.hpp"
#include "json.hpp"

namespace eodistort {
namespace {

std::string Fixed6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Splits one CSV record (RFC 4180 quoting) starting at `pos`.
std::vector<std::string> NextRecord(std::string_view text, std::size_t& pos) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          field += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && pos < text.size() && text[pos] == '\n') ++pos;
      break;
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

double ParseReal(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kMalformedConfig,
              std::string("bad ") + what + " field '" + s + "' in CSV");
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write '" + path.string() + "'");
}

// Replicate-averaged IoU per (class, intensity) and the class mean per
// intensity for one transform.
struct Aggregate {
  std::vector<double> xs;
  std::map<ClassId, std::string> names;
  std::map<ClassId, std::map<double, std::optional<double>>> per_class;
  std::map<double, std::optional<double>> mean;
};

Aggregate AggregateRows(const std::vector<CsvRow>& rows, std::string_view transform) {
  Aggregate agg;
  std::map<ClassId, std::map<double, std::pair<double, int>>> sums;
  std::set<double> xs;
  for (const auto& r : rows) {
    if (r.transform != transform) continue;
    xs.insert(r.intensity);
    agg.names[r.class_id] = r.class_name;
    auto& s = sums[r.class_id][r.intensity];
    if (r.iou) {
      s.first += *r.iou;
      ++s.second;
    }
  }
  agg.xs.assign(xs.begin(), xs.end());
  std::map<double, std::pair<double, int>> class_sums;
  for (const auto& [cls, by_x] : sums) {
    for (double x : agg.xs) {
      auto it = by_x.find(x);
      std::optional<double> v;
      if (it != by_x.end() && it->second.second > 0) {
        v = it->second.first / it->second.second;
        class_sums[x].first += *v;
        ++class_sums[x].second;
      }
      agg.per_class[cls][x] = v;
    }
  }
  for (double x : agg.xs) {
    const auto& s = class_sums[x];
    agg.mean[x] = s.second > 0 ? std::optional<double>(s.first / s.second)
                               : std::nullopt;
  }
  return agg;
}

constexpr const char* kPalette[8] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                     "#9467bd", "#8c564b", "#e377c2", "#17becf"};

constexpr double kLeft = 70.0;
constexpr double kTop = 40.0;
constexpr double kPlotW = 540.0;
constexpr double kPlotH = 480.0;

double Px(double x) { return kLeft + x * kPlotW; }
double Py(double y) { return kTop + (1.0 - y) * kPlotH; }

std::string Coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string XmlEscape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// data-values keeps full precision so charts can be checked numerically.
std::string DataValues(const Series& s) {
  std::string out;
  for (std::size_t i = 0; i < s.ys.size(); ++i) {
    if (i > 0) out += ' ';
    char buf[64];
    if (s.ys[i]) {
      std::snprintf(buf, sizeof(buf), "%.17g:%.17g", s.xs[i], *s.ys[i]);
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g:gap", s.xs[i]);
    }
    out += buf;
  }
  return out;
}

void EmitSeries(std::ostringstream& svg, const Series& s, const std::string& id,
                const std::string& color, double width, const char* dash) {
  svg << "  <g id=\"" << XmlEscape(id) << "\" data-name=\"" << XmlEscape(s.name)
      << "\" data-values=\"" << DataValues(s) << "\" fill=\"none\" stroke=\""
      << color << "\" stroke-width=\"" << Coord(width) << "\"";
  if (dash != nullptr) svg << " stroke-dasharray=\"" << dash << "\"";
  svg << ">\n";
  // Undefined values split the line into separate polylines.
  std::vector<std::string> segment;
  auto flush = [&] {
    if (segment.empty()) return;
    svg << "    <polyline points=\"";
    for (std::size_t i = 0; i < segment.size(); ++i) {
      svg << (i ? " " : "") << segment[i];
    }
    svg << "\"/>\n";
    segment.clear();
  };
  for (std::size_t i = 0; i < s.ys.size(); ++i) {
    if (!s.ys[i]) {
      flush();
      continue;
    }
    segment.push_back(Coord(Px(s.xs[i])) + "," + Coord(Py(*s.ys[i])));
  }
  flush();
  svg << "  </g>\n";
}

}  // namespace

std::string ToCsv(const SweepReport& report) {
  std::vector<const SweepRecord*> order;
  std::map<std::string, std::size_t> transform_rank;
  for (const auto& r : report.records) {
    transform_rank.emplace(r.transform, transform_rank.size());
    order.push_back(&r);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](const SweepRecord* a, const SweepRecord* b) {
                     return std::tuple(transform_rank[a->transform], a->class_id,
                                       a->intensity, a->replicate) <
                            std::tuple(transform_rank[b->transform], b->class_id,
                                       b->intensity, b->replicate);
                   });
  std::string out(kCsvHeader);
  out += '\n';
  const std::string split(SplitName(report.split));
  for (const SweepRecord* r : order) {
    out += CsvField(r->transform) + ',' + std::to_string(r->class_id) + ',' +
           CsvField(r->class_name) + ',' + Fixed6(r->intensity) + ',' +
           std::to_string(r->replicate) + ',' + (r->iou ? Fixed6(*r->iou) : "") +
           ',' + split + ',' + std::to_string(report.seed) + '\n';
  }
  return out;
}

void WriteCsv(const SweepReport& report, const std::filesystem::path& path) {
  WriteText(path, ToCsv(report));
}

std::vector<CsvRow> ParseCsv(std::string_view text) {
  std::size_t pos = 0;
  const auto header = NextRecord(text, pos);
  std::string joined;
  for (std::size_t i = 0; i < header.size(); ++i) {
    joined += (i ? "," : "") + header[i];
  }
  if (joined != kCsvHeader) {
    throw Error(ErrorCode::kMalformedConfig, "unexpected CSV header '" + joined + "'");
  }
  std::vector<CsvRow> rows;
  while (pos < text.size()) {
    const auto f = NextRecord(text, pos);
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 8) {
      throw Error(ErrorCode::kMalformedConfig,
                  "CSV row with " + std::to_string(f.size()) + " fields");
    }
    CsvRow row;
    row.transform = f[0];
    const double cls = ParseReal(f[1], "class_id");
    if (cls < 0 || cls > 255) {
      throw Error(ErrorCode::kMalformedConfig, "class_id out of range in CSV");
    }
    row.class_id = static_cast<ClassId>(cls);
    row.class_name = f[2];
    row.intensity = ParseReal(f[3], "intensity");
    row.replicate = static_cast<int>(ParseReal(f[4], "replicate"));
    if (!f[5].empty()) row.iou = ParseReal(f[5], "iou");
    row.split = f[6];
    try {
      row.seed = std::stoull(f[7]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kMalformedConfig, "bad seed field '" + f[7] + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CsvRow> ReadCsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot read '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseCsv(buffer.str());
}

std::vector<std::string> TransformsIn(const std::vector<CsvRow>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.transform) == out.end()) {
      out.push_back(r.transform);
    }
  }
  return out;
}

CurveSet BuildCurveSet(const std::vector<CsvRow>& rows, std::string_view transform,
                       const std::vector<CsvRow>* compare) {
  const Aggregate agg = AggregateRows(rows, transform);
  CurveSet set;
  set.transform = std::string(transform);
  for (const auto& [cls, by_x] : agg.per_class) {
    Series s;
    s.name = agg.names.at(cls);
    s.class_id = cls;
    for (const auto& [x, y] : by_x) {
      s.xs.push_back(x);
      s.ys.push_back(y);
    }
    set.classes.push_back(std::move(s));
  }
  set.mean.name = "mean";
  for (const auto& [x, y] : agg.mean) {
    set.mean.xs.push_back(x);
    set.mean.ys.push_back(y);
  }
  if (compare != nullptr) {
    const Aggregate other = AggregateRows(*compare, transform);
    if (!other.xs.empty()) {
      Series s;
      const std::string split = compare->empty() ? "" : compare->front().split;
      s.name = split.empty() ? "mean (comparison)" : "mean (" + split + ")";
      for (const auto& [x, y] : other.mean) {
        s.xs.push_back(x);
        s.ys.push_back(y);
      }
      set.comparison = std::move(s);
    }
  }
  return set;
}

std::string RenderSvg(const CurveSet& curves) {
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
         "width=\"800\" height=\"600\" viewBox=\"0 0 800 600\">\n"
      << "  <rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n"
      << "  <text x=\"" << Coord(kLeft + kPlotW / 2) << "\" y=\"24\" "
         "text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << XmlEscape(curves.transform) << "</text>\n";

  svg << "  <g id=\"grid\" stroke=\"#dddddd\" stroke-width=\"1\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    svg << "    <line x1=\"" << Coord(kLeft) << "\" y1=\"" << Coord(Py(v))
        << "\" x2=\"" << Coord(kLeft + kPlotW) << "\" y2=\"" << Coord(Py(v))
        << "\"/>\n";
    svg << "    <text x=\"" << Coord(kLeft - 8) << "\" y=\"" << Coord(Py(v) + 4)
        << "\" text-anchor=\"end\" stroke=\"none\" fill=\"black\">" << Coord(v)
        << "</text>\n";
    svg << "    <line x1=\"" << Coord(Px(v)) << "\" y1=\"" << Coord(kTop)
        << "\" x2=\"" << Coord(Px(v)) << "\" y2=\"" << Coord(kTop + kPlotH)
        << "\"/>\n";
    svg << "    <text x=\"" << Coord(Px(v)) << "\" y=\"" << Coord(kTop + kPlotH + 18)
        << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"black\">" << Coord(v)
        << "</text>\n";
  }
  svg << "  </g>\n";
  svg << "  <rect x=\"" << Coord(kLeft) << "\" y=\"" << Coord(kTop) << "\" width=\""
      << Coord(kPlotW) << "\" height=\"" << Coord(kPlotH)
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg << "  <text x=\"" << Coord(kLeft + kPlotW / 2) << "\" y=\"" << Coord(kTop + kPlotH + 44)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
         "intensity</text>\n";
  svg << "  <text x=\"18\" y=\"" << Coord(kTop + kPlotH / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
         "transform=\"rotate(-90 18 "
      << Coord(kTop + kPlotH / 2) << ")\">IoU</text>\n";

  // Classes arrive sorted by id, so the palette slot is the rank.
  for (std::size_t i = 0; i < curves.classes.size(); ++i) {
    const auto& s = curves.classes[i];
    EmitSeries(svg, s, "class-" + std::to_string(s.class_id.value_or(0)),
               kPalette[i % 8], 1.5, nullptr);
  }
  EmitSeries(svg, curves.mean, "mean", "#000000", 3.0, nullptr);
  if (curves.comparison) {
    EmitSeries(svg, *curves.comparison, "comparison", "#000000", 2.0, "8,4");
  }

  svg << "  <g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
  double y = kTop + 10;
  auto legend_entry = [&](const std::string& name, const std::string& color,
                          const char* dash, double width) {
    svg << "    <line x1=\"630.00\" y1=\"" << Coord(y) << "\" x2=\"660.00\" y2=\""
        << Coord(y) << "\" stroke=\"" << color << "\" stroke-width=\"" << Coord(width)
        << "\"";
    if (dash != nullptr) svg << " stroke-dasharray=\"" << dash << "\"";
    svg << "/>\n    <text x=\"666.00\" y=\"" << Coord(y + 4) << "\">" << XmlEscape(name)
        << "</text>\n";
    y += 20;
  };
  for (std::size_t i = 0; i < curves.classes.size(); ++i) {
    legend_entry(curves.classes[i].name, kPalette[i % 8], nullptr, 1.5);
  }
  legend_entry(curves.mean.name, "#000000", nullptr, 3.0);
  if (curves.comparison) {
    legend_entry(curves.comparison->name, "#000000", "8,4", 2.0);
  }
  svg << "  </g>\n</svg>\n";
  return svg.str();
}

void WriteSvg(const CurveSet& curves, const std::filesystem::path& path) {
  WriteText(path, RenderSvg(curves));
}

std::vector<std::filesystem::path> WriteCharts(const std::vector<CsvRow>& rows,
                                               const std::filesystem::path& out_dir,
                                               const std::vector<CsvRow>* compare) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::vector<std::filesystem::path> written;
  for (const auto& t : TransformsIn(rows)) {
    const auto path = out_dir / (t + ".svg");
    WriteSvg(BuildCurveSet(rows, t, compare), path);
    written.push_back(path);
  }
  return written;
}

void WriteProvenance(const SweepReport& report, const std::filesystem::path& path) {
  const nlohmann::json doc{{"seed", report.provenance.seed},
                           {"config_digest", report.provenance.config_digest},
                           {"split", SplitName(report.split)},
                           {"records", report.records.size()},
                           {"started_at", report.provenance.started_at},
                           {"finished_at", report.provenance.finished_at}};
  WriteText(path, doc.dump(2) + "\n");
}

}  // namespace eodistort
