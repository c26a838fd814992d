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
#ifndef EODISTORT_METRICS_HPP_
#define EODISTORT_METRICS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "eodistort/raster.hpp"

namespace eodistort {

// counts(t, p) = number of pixels with ground truth t predicted as p. Pixels
// whose ground truth is the background never enter the matrix.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  // class_ids must be unique; order defines the row/column order.
  explicit ConfusionMatrix(std::vector<ClassId> class_ids);

  const std::vector<ClassId>& class_ids() const noexcept { return class_ids_; }
  std::size_t num_classes() const noexcept { return class_ids_.size(); }
  bool contains(ClassId id) const noexcept { return index_[id] >= 0; }

  std::uint64_t count(ClassId truth, ClassId pred) const;
  std::uint64_t total() const noexcept;

  // Throws kDimensionMismatch, or kUnknownClass when a non-background truth
  // pixel or any prediction uses an id outside class_ids().
  void Accumulate(const LabelMap& truth, const LabelMap& pred,
                  ClassId background_id);

  // Elementwise sum; both matrices must share class_ids().
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  std::uint64_t TruePositives(ClassId id) const;
  std::uint64_t FalsePositives(ClassId id) const;
  std::uint64_t FalseNegatives(ClassId id) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t Index(ClassId id) const;

  std::vector<ClassId> class_ids_;
  std::array<int, 256> index_ = MakeEmptyIndex();
  std::vector<std::uint64_t> counts_;

  static constexpr std::array<int, 256> MakeEmptyIndex() {
    std::array<int, 256> a{};
    a.fill(-1);
    return a;
  }
};

// TP / (TP + FP + FN); nullopt when the class is absent from both truth and
// prediction.
std::optional<double> Iou(const ConfusionMatrix& cm, ClassId class_id);

// Unweighted mean of the defined IoUs of every class except background_id.
// Throws kNoDefinedClasses when none is defined.
double MeanIou(const ConfusionMatrix& cm, ClassId background_id);

}  // namespace eodistort

#endif  // EODISTORT_METRICS_HPP_
