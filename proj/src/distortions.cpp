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
#include "eodistort/distortions.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <utility>
#include <vector>

#include "eodistort/error.hpp"

namespace eodistort {
namespace {

void CheckIntensity(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0)) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s = %.17g is outside [0,1]", name, value);
    throw Error(ErrorCode::kIntensityOutOfRange, buf);
  }
}

std::uint8_t& ChannelRef(Rgb& px, Channel channel) {
  switch (channel) {
    case Channel::kR: return px.r;
    case Channel::kG: return px.g;
    case Channel::kB: return px.b;
  }
  return px.r;
}

std::uint8_t ChannelValue(Rgb px, Channel channel) {
  return ChannelRef(px, channel);
}

// Mixes every class pixel toward a per-pixel target value.
template <typename TargetFn>
ImageBuffer MixTowards(const ImageBuffer& image, const LabelMap& labels,
                       ClassId class_id, double lambda, TargetFn target) {
  ImageBuffer out = image;
  const double keep = 1.0 - lambda;
  const auto flat = labels.labels();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (flat[i] != class_id) continue;
    const Rgb px = image[i];
    const double t = target(px);
    out[i] = {RoundChannel(keep * px.r + lambda * t),
              RoundChannel(keep * px.g + lambda * t),
              RoundChannel(keep * px.b + lambda * t)};
  }
  return out;
}

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string_view KindName(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::kGrayScale: return "gray";
    case DistortionKind::kPixelSwap: return "pixel-swap";
    case DistortionKind::kColorDuplication: return "color-dup";
    case DistortionKind::kContextMask: return "context-mask";
  }
  return "gray";
}

DistortionKind ParseKind(std::string_view name) {
  if (name == "gray") return DistortionKind::kGrayScale;
  if (name == "pixel-swap") return DistortionKind::kPixelSwap;
  if (name == "color-dup") return DistortionKind::kColorDuplication;
  if (name == "context-mask") return DistortionKind::kContextMask;
  throw Error(ErrorCode::kInvalidSpec,
              "unknown transform '" + std::string(name) +
                  "' (expected gray, pixel-swap, color-dup or context-mask)");
}

std::string_view ChannelName(Channel channel) {
  switch (channel) {
    case Channel::kR: return "R";
    case Channel::kG: return "G";
    case Channel::kB: return "B";
  }
  return "R";
}

Channel ParseChannel(std::string_view name) {
  if (name.size() == 1) {
    switch (std::toupper(static_cast<unsigned char>(name[0]))) {
      case 'R': return Channel::kR;
      case 'G': return Channel::kG;
      case 'B': return Channel::kB;
      default: break;
    }
  }
  throw Error(ErrorCode::kInvalidSpec,
              "unknown channel '" + std::string(name) + "' (expected R, G or B)");
}

// The weights are exact multiples of 1/10000, so the luma is formed as an
// exact integer numerator and divided once. A correctly rounded quotient of
// an exact half-integer stays a half-integer, so rounding never goes astray.
double Luma(Rgb px) noexcept {
  const std::uint32_t numerator = 2125u * px.r + 7154u * px.g + 721u * px.b;
  return static_cast<double>(numerator) / 10000.0;
}

std::uint8_t RgbToGray(Rgb px) noexcept { return RoundChannel(Luma(px)); }

std::uint8_t RoundChannel(double value) noexcept {
  const double r = std::round(value);
  if (!(r > 0.0)) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

std::size_t SwapCount(double proportion, std::size_t class_size) noexcept {
  const double m = std::round(proportion * static_cast<double>(class_size));
  if (!(m > 0.0)) return 0;
  return std::min(class_size, static_cast<std::size_t>(m));
}

ImageBuffer GrayScaleTransform(const ImageBuffer& image, const LabelMap& labels,
                               ClassId class_id, double lambda) {
  CheckSameShape(image, labels);
  CheckIntensity(lambda, "lambda");
  return MixTowards(image, labels, class_id, lambda, Luma);
}

ImageBuffer ColorDuplication(const ImageBuffer& image, const LabelMap& labels,
                             ClassId class_id, Channel channel, double lambda) {
  CheckSameShape(image, labels);
  CheckIntensity(lambda, "lambda");
  return MixTowards(image, labels, class_id, lambda, [channel](Rgb px) {
    return static_cast<double>(ChannelValue(px, channel));
  });
}

SwapPlan PlanPixelSwap(const LabelMap& labels, ClassId class_id,
                       double proportion, RngStream& rng) {
  CheckIntensity(proportion, "p");
  std::vector<std::size_t> positions = ClassIndices(labels, class_id);
  const std::size_t k = positions.size();
  const std::size_t m = SwapCount(proportion, k);

  // Selection: after i steps positions[0, i) is a uniform sample.
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.Below(k - i));
    std::swap(positions[i], positions[j]);
  }
  positions.resize(m);

  SwapPlan plan;
  plan.positions = std::move(positions);
  plan.source.resize(m);
  for (std::size_t i = 0; i < m; ++i) plan.source[i] = i;
  for (std::size_t i = m > 0 ? m - 1 : 0; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.Below(i + 1));
    std::swap(plan.source[i], plan.source[j]);
  }
  return plan;
}

ImageBuffer PixelSwap(const ImageBuffer& image, const LabelMap& labels,
                      ClassId class_id, double proportion, RngStream& rng) {
  CheckSameShape(image, labels);
  const SwapPlan plan = PlanPixelSwap(labels, class_id, proportion, rng);
  ImageBuffer out = image;
  for (std::size_t i = 0; i < plan.positions.size(); ++i) {
    out[plan.positions[i]] = image[plan.positions[plan.source[i]]];
  }
  return out;
}

ImageBuffer ContextMask(const ImageBuffer& image, const LabelMap& labels,
                        ClassId class_id, const ChannelStats& fill) {
  CheckSameShape(image, labels);
  const Rgb fill_px{RoundChannel(fill.mean_r), RoundChannel(fill.mean_g),
                    RoundChannel(fill.mean_b)};
  ImageBuffer out = image;
  const auto flat = labels.labels();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (flat[i] != class_id) out[i] = fill_px;
  }
  return out;
}

void DistortionSpec::Validate() const {
  CheckIntensity(intensity, "intensity");
  const bool is_dup = kind == DistortionKind::kColorDuplication;
  if (is_dup != channel.has_value()) {
    throw Error(ErrorCode::kInvalidSpec,
                is_dup ? "color-dup requires a channel"
                       : "a channel is only meaningful for color-dup");
  }
  const bool needs_fill = kind == DistortionKind::kContextMask || mask_context;
  if (needs_fill != fill.has_value()) {
    throw Error(ErrorCode::kInvalidSpec,
                needs_fill ? "context masking requires fill means"
                           : "fill means are only meaningful with context masking");
  }
}

std::string DistortionSpec::Canonical() const {
  std::string s = "{\"kind\":\"" + std::string(KindName(kind)) + "\"";
  s += ",\"class_id\":" + std::to_string(class_id);
  s += ",\"intensity\":" + FormatDouble(intensity);
  if (channel) s += ",\"channel\":\"" + std::string(ChannelName(*channel)) + "\"";
  s += ",\"seed\":" + std::to_string(seed);
  s += ",\"image_index\":" + std::to_string(image_index);
  s += ",\"replicate\":" + std::to_string(replicate);
  if (fill) {
    s += ",\"fill\":[" + FormatDouble(fill->mean_r) + "," +
         FormatDouble(fill->mean_g) + "," + FormatDouble(fill->mean_b) + "]";
  }
  s += std::string(",\"mask_context\":") + (mask_context ? "true" : "false");
  s += "}";
  return s;
}

std::string DistortionSpec::Digest() const { return Hex64(Fnv1a64(Canonical())); }

ImageBuffer Apply(const ImageBuffer& image, const LabelMap& labels,
                  const DistortionSpec& spec) {
  spec.Validate();
  CheckSameShape(image, labels);
  ImageBuffer out;
  switch (spec.kind) {
    case DistortionKind::kGrayScale:
      out = GrayScaleTransform(image, labels, spec.class_id, spec.intensity);
      break;
    case DistortionKind::kPixelSwap: {
      RngStream rng = spec.Stream();
      out = PixelSwap(image, labels, spec.class_id, spec.intensity, rng);
      break;
    }
    case DistortionKind::kColorDuplication:
      out = ColorDuplication(image, labels, spec.class_id, *spec.channel,
                             spec.intensity);
      break;
    case DistortionKind::kContextMask:
      return ContextMask(image, labels, spec.class_id, *spec.fill);
  }
  if (spec.mask_context) {
    out = ContextMask(out, labels, spec.class_id, *spec.fill);
  }
  return out;
}

std::uint64_t Fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string Hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace eodistort
