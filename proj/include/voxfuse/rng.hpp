// Copyright 2026 The voxfuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

// Deterministic randomness. Two flavors:
//  - CounterRng: stateless, keyed on (seed, stream, item, draw). Evaluation
//    order never matters, so per-voxel noise is reproducible under any
//    parallel schedule.
//  - SequentialRng: a splitmix64 stream for inherently sequential logic
//    (scene layout, trajectory walks).

namespace voxfuse::rng {

constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

inline double bits_to_unit(std::uint64_t bits) {
  // 53 mantissa bits -> [0, 1)
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

struct CounterRng {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::uint64_t bits(std::uint64_t item, std::uint64_t draw) const {
    return mix64(combine(combine(seed, stream), combine(item, draw)));
  }

  /// Uniform in [0, 1).
  double uniform(std::uint64_t item, std::uint64_t draw) const {
    return bits_to_unit(bits(item, draw));
  }

  /// Uniform in [-1, 1).
  double symmetric(std::uint64_t item, std::uint64_t draw) const {
    return 2.0 * uniform(item, draw) - 1.0;
  }

  /// Standard normal via Box-Muller; consumes draws (2k, 2k+1).
  double gaussian(std::uint64_t item, std::uint64_t pair_index) const {
    const double u1 = uniform(item, 2 * pair_index);
    const double u2 = uniform(item, 2 * pair_index + 1);
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * M_PI * u2);
  }
};

class SequentialRng {
 public:
  explicit SequentialRng(std::uint64_t seed) : state_(mix64(seed)) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  double uniform() { return bits_to_unit(next()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) %
           n;
  }

 private:
  std::uint64_t state_;
};

}  // namespace voxfuse::rng
