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
#ifndef EODISTORT_DISTORTIONS_HPP_
#define EODISTORT_DISTORTIONS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eodistort/dataset.hpp"
#include "eodistort/raster.hpp"
#include "eodistort/rng.hpp"

namespace eodistort {

// Class-conditional transforms. Every transform touches only the pixels whose
// label equals the target class (context masking touches only the others),
// mixes in double precision from the integer inputs and rounds exactly once,
// half away from zero, clamped to [0,255].

enum class DistortionKind { kGrayScale, kPixelSwap, kColorDuplication, kContextMask };
enum class Channel { kR, kG, kB };

// CLI vocabulary: gray, pixel-swap, color-dup, context-mask.
std::string_view KindName(DistortionKind kind);
DistortionKind ParseKind(std::string_view name);
std::string_view ChannelName(Channel channel);  // "R", "G", "B"
Channel ParseChannel(std::string_view name);    // case-insensitive

// 0.2125 r + 0.7154 g + 0.0721 b as a real number. The transforms mix with
// this value, not the rounded one.
double Luma(Rgb pixel) noexcept;
std::uint8_t RgbToGray(Rgb pixel) noexcept;

// round-half-away-from-zero and clamp into a channel value.
std::uint8_t RoundChannel(double value) noexcept;

// Number of class pixels a pixel swap moves: round(p * k), half away from zero.
std::size_t SwapCount(double proportion, std::size_t class_size) noexcept;

ImageBuffer GrayScaleTransform(const ImageBuffer& image, const LabelMap& labels,
                               ClassId class_id, double lambda);

// The random part of a pixel swap. positions holds the round(p*K) selected
// class indices (flat, in selection order); the output takes
// out[positions[i]] = in[positions[source[i]]].
struct SwapPlan {
  std::vector<std::size_t> positions;
  std::vector<std::size_t> source;
};

// Partial Fisher-Yates over the row-major class positions selects the m
// positions; a second Fisher-Yates pass (from the top index down) on the same
// stream draws the permutation.
SwapPlan PlanPixelSwap(const LabelMap& labels, ClassId class_id,
                       double proportion, RngStream& rng);

// Applies PlanPixelSwap: RGB triples move atomically, everything outside the
// selection is untouched.
ImageBuffer PixelSwap(const ImageBuffer& image, const LabelMap& labels,
                      ClassId class_id, double proportion, RngStream& rng);

ImageBuffer ColorDuplication(const ImageBuffer& image, const LabelMap& labels,
                             ClassId class_id, Channel channel, double lambda);

// Replaces every pixel whose label differs from class_id with the rounded
// fill means.
ImageBuffer ContextMask(const ImageBuffer& image, const LabelMap& labels,
                        ClassId class_id, const ChannelStats& fill);

struct DistortionSpec {
  DistortionKind kind = DistortionKind::kGrayScale;
  ClassId class_id = 0;
  // Lambda for the mixing transforms, p for pixel swap, unused by masking.
  double intensity = 0.0;
  std::optional<Channel> channel;  // color duplication only
  std::uint64_t seed = 0;
  std::uint64_t image_index = 0;
  std::uint32_t replicate = 0;
  // Fill for kContextMask, or for mask_context.
  std::optional<ChannelStats> fill;
  // Additionally replace all non-class pixels with `fill` (context-free mode).
  bool mask_context = false;

  // Throws kIntensityOutOfRange or kInvalidSpec.
  void Validate() const;

  RngStream Stream() const {
    return RngStream(seed, image_index, class_id, replicate);
  }

  // Canonical one-line JSON rendering; stable across runs.
  std::string Canonical() const;
  // 16 hex digits of FNV-1a over Canonical().
  std::string Digest() const;
};

// Dispatches to the matching transform. With mask_context the class pixels
// are transformed and everything else is replaced by the fill; the two pixel
// sets are disjoint, so the order does not matter.
ImageBuffer Apply(const ImageBuffer& image, const LabelMap& labels,
                  const DistortionSpec& spec);

// 64-bit FNV-1a, used for spec and config digests.
std::uint64_t Fnv1a64(std::string_view bytes) noexcept;
std::string Hex64(std::uint64_t value);

}  // namespace eodistort

#endif  // EODISTORT_DISTORTIONS_HPP_
