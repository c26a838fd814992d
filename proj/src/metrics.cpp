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
#include "eodistort/metrics.hpp"

#include <numeric>
#include <string>

#include "eodistort/error.hpp"

namespace eodistort {

ConfusionMatrix::ConfusionMatrix(std::vector<ClassId> class_ids)
    : class_ids_(std::move(class_ids)),
      counts_(class_ids_.size() * class_ids_.size(), 0) {
  for (std::size_t i = 0; i < class_ids_.size(); ++i) {
    if (index_[class_ids_[i]] >= 0) {
      throw Error(ErrorCode::kInvalidSpec,
                  "duplicate class id " + std::to_string(class_ids_[i]));
    }
    index_[class_ids_[i]] = static_cast<int>(i);
  }
}

std::size_t ConfusionMatrix::Index(ClassId id) const {
  const int i = index_[id];
  if (i < 0) {
    throw Error(ErrorCode::kUnknownClass,
                "class id " + std::to_string(id) + " is not in the class table");
  }
  return static_cast<std::size_t>(i);
}

std::uint64_t ConfusionMatrix::count(ClassId truth, ClassId pred) const {
  return counts_[Index(truth) * num_classes() + Index(pred)];
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::Accumulate(const LabelMap& truth, const LabelMap& pred,
                                 ClassId background_id) {
  CheckSameShape(truth, pred);
  const auto t = truth.labels();
  const auto p = pred.labels();
  const std::size_t n = num_classes();
  // Validate first so a bad map leaves the matrix untouched.
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (index_[p[i]] < 0) Index(p[i]);
    if (t[i] != background_id && index_[t[i]] < 0) Index(t[i]);
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == background_id) continue;
    ++counts_[static_cast<std::size_t>(index_[t[i]]) * n +
              static_cast<std::size_t>(index_[p[i]])];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.class_ids_ != class_ids_) {
    throw Error(ErrorCode::kInvalidSpec,
                "cannot merge confusion matrices over different class tables");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::uint64_t ConfusionMatrix::TruePositives(ClassId id) const {
  return count(id, id);
}

std::uint64_t ConfusionMatrix::FalsePositives(ClassId id) const {
  const std::size_t c = Index(id);
  std::uint64_t sum = 0;
  for (std::size_t t = 0; t < num_classes(); ++t) {
    if (t != c) sum += counts_[t * num_classes() + c];
  }
  return sum;
}

std::uint64_t ConfusionMatrix::FalseNegatives(ClassId id) const {
  const std::size_t c = Index(id);
  std::uint64_t sum = 0;
  for (std::size_t p = 0; p < num_classes(); ++p) {
    if (p != c) sum += counts_[c * num_classes() + p];
  }
  return sum;
}

std::optional<double> Iou(const ConfusionMatrix& cm, ClassId class_id) {
  const std::uint64_t tp = cm.TruePositives(class_id);
  const std::uint64_t denom =
      tp + cm.FalsePositives(class_id) + cm.FalseNegatives(class_id);
  if (denom == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

double MeanIou(const ConfusionMatrix& cm, ClassId background_id) {
  double sum = 0.0;
  std::size_t defined = 0;
  for (ClassId id : cm.class_ids()) {
    if (id == background_id) continue;
    if (auto iou = Iou(cm, id)) {
      sum += *iou;
      ++defined;
    }
  }
  if (defined == 0) {
    throw Error(ErrorCode::kNoDefinedClasses,
                "no non-background class has a defined IoU");
  }
  return sum / static_cast<double>(defined);
}

}  // namespace eodistort
