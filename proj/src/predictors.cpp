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
#include "eodistort/predictors.hpp"

#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "eodistort/error.hpp"
#include "json.hpp"

namespace eodistort {
namespace {

using nlohmann::json;

LabelMap PredictNearestColor(const NearestColorPredictor& p,
                             const ImageBuffer& image) {
  LabelMap out(image.width(), image.height());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const Rgb px = image[i];
    std::int64_t best = -1;
    ClassId best_id = 0;
    for (const auto& [id, c] : p.centroids) {
      const std::int64_t dr = std::int64_t{px.r} - c.r;
      const std::int64_t dg = std::int64_t{px.g} - c.g;
      const std::int64_t db = std::int64_t{px.b} - c.b;
      const std::int64_t d = dr * dr + dg * dg + db * db;
      if (best < 0 || d < best) {
        best = d;
        best_id = id;
      }
    }
    out[i] = best_id;
  }
  return out;
}

LabelMap PredictVariance(const VariancePredictor& p, const ImageBuffer& image) {
  const auto h = static_cast<std::ptrdiff_t>(image.height());
  const auto w = static_cast<std::ptrdiff_t>(image.width());
  const std::ptrdiff_t half = p.window / 2;
  const auto n = static_cast<std::int64_t>(p.window) * p.window;
  LabelMap out(image.width(), image.height());
  for (std::ptrdiff_t row = 0; row < h; ++row) {
    for (std::ptrdiff_t col = 0; col < w; ++col) {
      std::int64_t sum[3] = {0, 0, 0};
      std::int64_t sum_sq[3] = {0, 0, 0};
      for (std::ptrdiff_t dy = -half; dy <= half; ++dy) {
        const std::ptrdiff_t y = std::clamp<std::ptrdiff_t>(row + dy, 0, h - 1);
        for (std::ptrdiff_t dx = -half; dx <= half; ++dx) {
          const std::ptrdiff_t x = std::clamp<std::ptrdiff_t>(col + dx, 0, w - 1);
          const Rgb px = image.at(static_cast<std::size_t>(y),
                                  static_cast<std::size_t>(x));
          const std::int64_t v[3] = {px.r, px.g, px.b};
          for (int c = 0; c < 3; ++c) {
            sum[c] += v[c];
            sum_sq[c] += v[c] * v[c];
          }
        }
      }
      // Population variance per channel: (n*S2 - S1^2) / n^2, exact numerator.
      double mean_var = 0.0;
      for (int c = 0; c < 3; ++c) {
        mean_var += static_cast<double>(n * sum_sq[c] - sum[c] * sum[c]) /
                    static_cast<double>(n * n);
      }
      mean_var /= 3.0;
      out.at(static_cast<std::size_t>(row), static_cast<std::size_t>(col)) =
          mean_var < p.threshold ? p.low_class : p.high_class;
    }
  }
  return out;
}

std::string ShellQuote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += "'";
  return out;
}

// At most one external invocation per staging directory at a time.
std::mutex& StagingLock(const std::filesystem::path& dir) {
  static std::mutex registry_mutex;
  static std::map<std::string, std::unique_ptr<std::mutex>> locks;
  std::lock_guard<std::mutex> guard(registry_mutex);
  auto key = std::filesystem::weakly_canonical(dir).string();
  auto& slot = locks[key];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void ResetDirectory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIoFailure,
                "cannot create '" + dir.string() + "': " + ec.message());
  }
}

std::vector<Prediction> PredictExternal(const ExternalPredictor& p,
                                        std::span<const BatchItem> items) {
  std::lock_guard<std::mutex> guard(StagingLock(p.staging_dir));
  const auto input_dir = p.staging_dir / "input_dir";
  const auto output_dir = p.staging_dir / "output_dir";
  ResetDirectory(input_dir);
  ResetDirectory(output_dir);
  const auto staged = WriteBatch(input_dir, items);
  const std::string command =
      ExpandCommand(p.command_template, input_dir, output_dir);
  const int status = RunShellCommand(command, p.timeout);
  if (status != 0) {
    throw Error(ErrorCode::kExternalCommandFailed,
                "predictor command exited with status " +
                    std::to_string(status) + ": " + command);
  }
  return CollectBatch(output_dir, staged);
}

}  // namespace

PredictorHandle::PredictorHandle(Variant impl) : impl_(std::move(impl)) {
  if (const auto* ext = std::get_if<ExternalPredictor>(&impl_)) {
    if (ext->command_template.find("{input_dir}") == std::string::npos ||
        ext->command_template.find("{output_dir}") == std::string::npos) {
      throw Error(ErrorCode::kInvalidSpec,
                  "external command template must contain {input_dir} and "
                  "{output_dir}");
    }
    if (ext->staging_dir.empty()) {
      throw Error(ErrorCode::kInvalidSpec,
                  "external predictor needs a staging directory");
    }
  }
  if (const auto* var = std::get_if<VariancePredictor>(&impl_)) {
    if (var->window < 3 || var->window % 2 == 0) {
      throw Error(ErrorCode::kInvalidSpec,
                  "variance window must be odd and >= 3, got " +
                      std::to_string(var->window));
    }
  }
  if (const auto* oracle = std::get_if<OraclePredictor>(&impl_)) {
    if (!oracle->truth) {
      throw Error(ErrorCode::kInvalidSpec, "oracle predictor has no labels");
    }
  }
}

PredictorHandle PredictorHandle::Oracle(std::map<std::string, LabelMap> truth) {
  return PredictorHandle(OraclePredictor{
      std::make_shared<const std::map<std::string, LabelMap>>(std::move(truth))});
}

PredictorHandle PredictorHandle::NearestColor(std::map<ClassId, Rgb> centroids) {
  if (centroids.empty()) {
    throw Error(ErrorCode::kInvalidSpec, "nearest-color needs centroids");
  }
  return PredictorHandle(NearestColorPredictor{std::move(centroids)});
}

PredictorHandle PredictorHandle::ConstantClass(ClassId class_id) {
  return PredictorHandle(ConstantClassPredictor{class_id});
}

PredictorHandle PredictorHandle::External(std::string command_template,
                                          std::filesystem::path staging_dir,
                                          std::chrono::seconds timeout) {
  return PredictorHandle(ExternalPredictor{std::move(command_template),
                                           std::move(staging_dir), timeout});
}

PredictorHandle MakeVariancePredictor(double threshold, int window,
                                      ClassId low_class, ClassId high_class) {
  return PredictorHandle(
      VariancePredictor{threshold, window, low_class, high_class});
}

std::string_view PredictorHandle::kind_name() const noexcept {
  switch (impl_.index()) {
    case 0: return "oracle";
    case 1: return "nearest-color";
    case 2: return "constant";
    case 3: return "variance";
    default: return "external";
  }
}

std::vector<Prediction> PredictorHandle::PredictBatch(
    std::span<const BatchItem> items) const {
  if (items.empty()) {
    throw Error(ErrorCode::kInvalidSpec, "empty prediction batch");
  }
  if (const auto* ext = std::get_if<ExternalPredictor>(&impl_)) {
    auto preds = PredictExternal(*ext, items);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (preds[i].labels.width() != items[i].image.width() ||
          preds[i].labels.height() != items[i].image.height()) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "prediction for '" + items[i].id + "' is " +
                        std::to_string(preds[i].labels.width()) + "x" +
                        std::to_string(preds[i].labels.height()) +
                        ", image is " + std::to_string(items[i].image.width()) +
                        "x" + std::to_string(items[i].image.height()));
      }
    }
    return preds;
  }

  std::vector<Prediction> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    LabelMap labels = std::visit(
        [&item](const auto& p) -> LabelMap {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, OraclePredictor>) {
            auto it = p.truth->find(item.id);
            if (it == p.truth->end()) {
              throw Error(ErrorCode::kInvalidSpec,
                          "oracle has no labels for '" + item.id + "'");
            }
            CheckSameShape(item.image, it->second);
            return it->second;
          } else if constexpr (std::is_same_v<T, NearestColorPredictor>) {
            return PredictNearestColor(p, item.image);
          } else if constexpr (std::is_same_v<T, ConstantClassPredictor>) {
            return LabelMap(item.image.width(), item.image.height(), p.class_id);
          } else if constexpr (std::is_same_v<T, VariancePredictor>) {
            return PredictVariance(p, item.image);
          } else {
            return {};
          }
        },
        impl_);
    out.push_back({item.id, std::move(labels)});
  }
  return out;
}

std::string BatchJson(std::span<const StagedImage> images) {
  json list = json::array();
  for (const auto& img : images) {
    list.push_back({{"id", img.id},
                    {"file", img.id + ".png"},
                    {"width", img.width},
                    {"height", img.height}});
  }
  return json{{"images", list}}.dump(2) + "\n";
}

std::vector<StagedImage> WriteBatch(const std::filesystem::path& input_dir,
                                    std::span<const BatchItem> items) {
  std::error_code ec;
  std::filesystem::create_directories(input_dir, ec);
  std::vector<StagedImage> staged;
  staged.reserve(items.size());
  for (const auto& item : items) {
    SaveImage(item.image, input_dir / (item.id + ".png"));
    staged.push_back({item.id, item.image.width(), item.image.height()});
  }
  std::ofstream out(input_dir / "batch.json", std::ios::binary);
  out << BatchJson(staged);
  if (!out) {
    throw Error(ErrorCode::kIoFailure,
                "cannot write " + (input_dir / "batch.json").string());
  }
  return staged;
}

std::vector<StagedImage> ReadBatchJson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kMissingFile, "cannot read '" + path.string() + "'");
  }
  std::vector<StagedImage> out;
  try {
    const json doc = json::parse(in);
    for (const auto& img : doc.at("images")) {
      out.push_back({img.at("id").get<std::string>(),
                     img.at("width").get<std::size_t>(),
                     img.at("height").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest,
                "bad batch manifest '" + path.string() + "': " + e.what());
  }
  return out;
}

std::vector<Prediction> CollectBatch(const std::filesystem::path& output_dir,
                                     std::span<const StagedImage> images) {
  std::vector<std::string> missing;
  for (const auto& img : images) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(output_dir / (img.id + ".png"), ec)) {
      missing.push_back(img.id);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::kMissingPrediction,
                "no prediction in '" + output_dir.string() + "' for: " + list);
  }
  std::vector<Prediction> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    LabelMap labels = LoadLabels(output_dir / (img.id + ".png"));
    if (labels.width() != img.width || labels.height() != img.height) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "prediction for '" + img.id + "' is " +
                      std::to_string(labels.width()) + "x" +
                      std::to_string(labels.height()) + ", expected " +
                      std::to_string(img.width) + "x" +
                      std::to_string(img.height));
    }
    out.push_back({img.id, std::move(labels)});
  }
  return out;
}

std::string ExpandCommand(std::string_view command_template,
                          const std::filesystem::path& input_dir,
                          const std::filesystem::path& output_dir) {
  std::string out(command_template);
  const std::pair<std::string, std::string> subs[] = {
      {"{input_dir}", ShellQuote(input_dir.string())},
      {"{output_dir}", ShellQuote(output_dir.string())}};
  for (const auto& [key, value] : subs) {
    for (std::size_t pos = out.find(key); pos != std::string::npos;
         pos = out.find(key, pos + value.size())) {
      out.replace(pos, key.size(), value);
    }
  }
  return out;
}

int RunShellCommand(const std::string& command, std::chrono::seconds timeout) {
  const pid_t pid = fork();
  if (pid < 0) {
    throw Error(ErrorCode::kExternalCommandFailed,
                std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    setpgid(0, 0);
    dup2(STDERR_FILENO, STDOUT_FILENO);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  auto delay = std::chrono::milliseconds(1);
  int status = 0;
  while (true) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) {
      throw Error(ErrorCode::kExternalCommandFailed,
                  std::string("waitpid failed: ") + std::strerror(errno));
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw Error(ErrorCode::kExternalTimeout,
                  "predictor exceeded " + std::to_string(timeout.count()) +
                      " s: " + command);
    }
    std::this_thread::sleep_for(delay);
    delay = std::min(delay * 2, std::chrono::milliseconds(50));
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  throw Error(ErrorCode::kExternalCommandFailed,
              "predictor terminated by signal " +
                  std::to_string(WIFSIGNALED(status) ? WTERMSIG(status) : -1) +
                  ": " + command);
}

}  // namespace eodistort
