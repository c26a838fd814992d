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
#ifndef EODISTORT_RNG_HPP_
#define EODISTORT_RNG_HPP_

#include <cstdint>

namespace eodistort {

// Counter-based generator. Output n of a stream with key k is
//
//   Mix64(k + (n + 1) * kGolden)
//
// where Mix64 is the SplitMix64 finalizer:
//
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   z =  z ^ (z >> 31)
//
// and kGolden = 0x9E3779B97F4A7C15. All arithmetic is modulo 2^64. Streams
// carry no shared state, so any number of them can be drawn in parallel and
// any implementation of the constants above reproduces them exactly.
class RngStream {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t Mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Key derivation: start from Mix64(seed) and fold in each component with
  // key = Mix64(key ^ Mix64(component + tag)), tags 1, 2 and 3 for image
  // index, class id and replicate respectively.
  static constexpr std::uint64_t DeriveKey(std::uint64_t seed,
                                           std::uint64_t image_index,
                                           std::uint64_t class_id,
                                           std::uint64_t replicate) noexcept {
    std::uint64_t key = Mix64(seed);
    key = Mix64(key ^ Mix64(image_index + 1));
    key = Mix64(key ^ Mix64(class_id + 2));
    key = Mix64(key ^ Mix64(replicate + 3));
    return key;
  }

  constexpr explicit RngStream(std::uint64_t key) noexcept : key_(key) {}

  constexpr RngStream(std::uint64_t seed, std::uint64_t image_index,
                      std::uint64_t class_id, std::uint64_t replicate) noexcept
      : key_(DeriveKey(seed, image_index, class_id, replicate)) {}

  constexpr std::uint64_t Next() noexcept {
    ++counter_;
    return Mix64(key_ + counter_ * kGolden);
  }

  // Uniform integer in [0, bound) by rejection: draws below
  // (2^64 - bound) mod bound are discarded, the rest reduced modulo bound.
  // bound must be positive.
  constexpr std::uint64_t Below(std::uint64_t bound) noexcept {
    const std::uint64_t threshold = (0 - bound) % bound;
    std::uint64_t x = Next();
    while (x < threshold) x = Next();
    return x % bound;
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace eodistort

#endif  // EODISTORT_RNG_HPP_
