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
#include "eodistort/raster.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>
#include <system_error>

#include "eodistort/error.hpp"

namespace eodistort {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors through longjmp; the message is stashed here so the
// caller can turn it into an exception after the jump.
struct PngErrorState {
  std::string message;
};

void OnPngError(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  if (state != nullptr) state->message = msg;
  png_longjmp(png, 1);
}

void OnPngWarning(png_structp, png_const_charp) {}

struct DecodedPng {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bytes;
};

std::string Describe(const std::filesystem::path& path) {
  return "'" + path.string() + "'";
}

// Decodes a PNG whose IHDR must match `color_type` at 8 bits per channel and
// which carries no transparency. Anything else is a malformed raster.
DecodedPng ReadPng(const std::filesystem::path& path, int color_type,
                   std::size_t channels, const char* what) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kMissingFile, "no such file " + Describe(path));
  }
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) {
    throw Error(ErrorCode::kMissingFile, "cannot open " + Describe(path));
  }
  png_byte signature[8] = {};
  if (std::fread(signature, 1, sizeof(signature), file.get()) !=
          sizeof(signature) ||
      png_sig_cmp(signature, 0, sizeof(signature)) != 0) {
    throw Error(ErrorCode::kMalformedRaster,
                Describe(path) + " is not a PNG stream");
  }

  PngErrorState state;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state,
                                           OnPngError, OnPngWarning);
  if (png == nullptr) {
    throw Error(ErrorCode::kIoFailure, "png_create_read_struct failed");
  }
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::kIoFailure, "png_create_info_struct failed");
  }

  DecodedPng out;
  std::string violation;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kMalformedRaster,
                Describe(path) + ": corrupt stream (" + state.message + ")");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, sizeof(signature));
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int actual_type = png_get_color_type(png, info);
  if (bit_depth != 8) {
    violation = "expected 8 bits per channel, found " +
                std::to_string(bit_depth);
  } else if (actual_type != color_type) {
    violation = std::string("expected ") + what + " color type, found " +
                std::to_string(actual_type);
  } else if (png_get_valid(png, info, PNG_INFO_tRNS) != 0) {
    violation = "transparency chunk present";
  } else if (png_get_channels(png, info) != channels) {
    violation = "unexpected channel count";
  }
  if (!violation.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kMalformedRaster, Describe(path) + ": " + violation);
  }

  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  const std::size_t stride = out.width * channels;
  out.bytes.resize(stride * out.height);
  rows.resize(out.height);
  for (std::size_t y = 0; y < out.height; ++y) {
    rows[y] = out.bytes.data() + y * stride;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void WritePng(const std::filesystem::path& path, std::size_t width,
              std::size_t height, int color_type, std::size_t channels,
              const std::uint8_t* data) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) {
    throw Error(ErrorCode::kIoFailure, "cannot write " + Describe(path));
  }
  PngErrorState state;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state,
                                            OnPngError, OnPngWarning);
  if (png == nullptr) {
    throw Error(ErrorCode::kIoFailure, "png_create_write_struct failed");
  }
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::kIoFailure, "png_create_info_struct failed");
  }
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoFailure,
                "writing " + Describe(path) + " failed: " + state.message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = width * channels;
  for (std::size_t y = 0; y < height; ++y) {
    // libpng takes non-const row pointers but does not modify them on write.
    rows[y] = const_cast<png_bytep>(data + y * stride);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0 || std::ferror(file.get()) != 0) {
    throw Error(ErrorCode::kIoFailure, "short write to " + Describe(path));
  }
}

}  // namespace

ImageBuffer::ImageBuffer(std::size_t width, std::size_t height, Rgb fill)
    : width_(width), height_(height), pixels_(width * height, fill) {}

ImageBuffer::ImageBuffer(std::size_t width, std::size_t height,
                         std::vector<Rgb> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (pixels_.size() != width_ * height_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "pixel count " + std::to_string(pixels_.size()) +
                    " does not match " + std::to_string(width_) + "x" +
                    std::to_string(height_));
  }
}

LabelMap::LabelMap(std::size_t width, std::size_t height, ClassId fill)
    : width_(width), height_(height), labels_(width * height, fill) {}

LabelMap::LabelMap(std::size_t width, std::size_t height,
                   std::vector<ClassId> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
  if (labels_.size() != width_ * height_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "label count " + std::to_string(labels_.size()) +
                    " does not match " + std::to_string(width_) + "x" +
                    std::to_string(height_));
  }
}

ImageBuffer LoadImage(const std::filesystem::path& path) {
  DecodedPng png = ReadPng(path, PNG_COLOR_TYPE_RGB, 3, "RGB");
  std::vector<Rgb> pixels(png.width * png.height);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = {png.bytes[3 * i], png.bytes[3 * i + 1], png.bytes[3 * i + 2]};
  }
  return ImageBuffer(png.width, png.height, std::move(pixels));
}

void SaveImage(const ImageBuffer& image, const std::filesystem::path& path) {
  static_assert(sizeof(Rgb) == 3, "Rgb must be tightly packed");
  WritePng(path, image.width(), image.height(), PNG_COLOR_TYPE_RGB, 3,
           reinterpret_cast<const std::uint8_t*>(image.pixels().data()));
}

LabelMap LoadLabels(const std::filesystem::path& path) {
  DecodedPng png = ReadPng(path, PNG_COLOR_TYPE_GRAY, 1, "grayscale");
  return LabelMap(png.width, png.height, std::move(png.bytes));
}

void SaveLabels(const LabelMap& labels, const std::filesystem::path& path) {
  WritePng(path, labels.width(), labels.height(), PNG_COLOR_TYPE_GRAY, 1,
           labels.labels().data());
}

std::vector<Position> ClassPositions(const LabelMap& labels,
                                     ClassId class_id) {
  std::vector<Position> out;
  for (std::size_t row = 0; row < labels.height(); ++row) {
    for (std::size_t col = 0; col < labels.width(); ++col) {
      if (labels.at(row, col) == class_id) out.push_back({row, col});
    }
  }
  return out;
}

std::vector<std::size_t> ClassIndices(const LabelMap& labels,
                                      ClassId class_id) {
  std::vector<std::size_t> out;
  const auto flat = labels.labels();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (flat[i] == class_id) out.push_back(i);
  }
  return out;
}

void CheckSameShape(const ImageBuffer& image, const LabelMap& labels) {
  if (image.width() != labels.width() || image.height() != labels.height()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "image is " + std::to_string(image.width()) + "x" +
                    std::to_string(image.height()) + " but labels are " +
                    std::to_string(labels.width()) + "x" +
                    std::to_string(labels.height()));
  }
}

void CheckSameShape(const LabelMap& a, const LabelMap& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "label maps differ: " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " +
                    std::to_string(b.width()) + "x" +
                    std::to_string(b.height()));
  }
}

}  // namespace eodistort
