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
#ifndef EODISTORT_RASTER_HPP_
#define EODISTORT_RASTER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace eodistort {

using ClassId = std::uint8_t;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
  friend auto operator<=>(const Rgb&, const Rgb&) = default;
};

struct Position {
  std::size_t row = 0;
  std::size_t col = 0;

  friend bool operator==(const Position&, const Position&) = default;
};

// H x W RGB raster, row-major, origin top-left.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(std::size_t width, std::size_t height, Rgb fill = {});
  // Throws kDimensionMismatch unless pixels.size() == width * height.
  ImageBuffer(std::size_t width, std::size_t height, std::vector<Rgb> pixels);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }

  const Rgb& at(std::size_t row, std::size_t col) const {
    return pixels_[row * width_ + col];
  }
  Rgb& at(std::size_t row, std::size_t col) {
    return pixels_[row * width_ + col];
  }
  const Rgb& operator[](std::size_t index) const { return pixels_[index]; }
  Rgb& operator[](std::size_t index) { return pixels_[index]; }

  std::span<const Rgb> pixels() const noexcept { return pixels_; }
  std::span<Rgb> pixels() noexcept { return pixels_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<Rgb> pixels_;
};

// H x W map of class ids, row-major, origin top-left.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(std::size_t width, std::size_t height, ClassId fill = 0);
  LabelMap(std::size_t width, std::size_t height, std::vector<ClassId> labels);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return labels_.size(); }

  ClassId at(std::size_t row, std::size_t col) const {
    return labels_[row * width_ + col];
  }
  ClassId& at(std::size_t row, std::size_t col) {
    return labels_[row * width_ + col];
  }
  ClassId operator[](std::size_t index) const { return labels_[index]; }
  ClassId& operator[](std::size_t index) { return labels_[index]; }

  std::span<const ClassId> labels() const noexcept { return labels_; }
  std::span<ClassId> labels() noexcept { return labels_; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<ClassId> labels_;
};

// Images are 8-bit RGB PNG. Grayscale, palette, alpha and 16-bit files are
// rejected with kMalformedRaster; a missing path raises kMissingFile.
ImageBuffer LoadImage(const std::filesystem::path& path);
void SaveImage(const ImageBuffer& image, const std::filesystem::path& path);

// Label maps are 8-bit single-channel PNG.
LabelMap LoadLabels(const std::filesystem::path& path);
void SaveLabels(const LabelMap& labels, const std::filesystem::path& path);

// Positions with labels == class_id in row-major order.
std::vector<Position> ClassPositions(const LabelMap& labels, ClassId class_id);

// Flat (row * width + col) indices of the same set; what the transforms use.
std::vector<std::size_t> ClassIndices(const LabelMap& labels, ClassId class_id);

// Throws kDimensionMismatch when the two rasters differ in size.
void CheckSameShape(const ImageBuffer& image, const LabelMap& labels);
void CheckSameShape(const LabelMap& a, const LabelMap& b);

}  // namespace eodistort

#endif  // EODISTORT_RASTER_HPP_
