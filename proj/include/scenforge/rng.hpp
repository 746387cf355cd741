// Copyright 2026 The Scenforge Authors.
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

#ifndef SCENFORGE_RNG_HPP
#define SCENFORGE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace scenforge::rng {

// Deterministic draws on top of mt19937_64. The engine's bit stream is fully
// specified by the standard; std::uniform_real_distribution and
// std::normal_distribution are not, so the mappings live here instead.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::uint64_t next_u64() { return engine_(); }

  std::uint64_t uniform_index(std::uint64_t n) {
    // Modulo bias is irrelevant at the index counts used here.
    return engine_() % n;
  }

  // Box-Muller; consumes two uniforms per pair, caches the second.
  double normal(double mean, double stddev) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  void discard(std::uint64_t n) { engine_.discard(n); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable seed derivation for independent sub-streams.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace scenforge::rng

#endif  // SCENFORGE_RNG_HPP
