// Copyright 2026 The lsmpc Authors
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

#ifndef LSMPC_STATS_HPP_
#define LSMPC_STATS_HPP_

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace lsmpc {

// Standard normal density.
double normal_pdf(double z);

// Standard normal CDF, accurate to machine precision via erfc.
double normal_cdf(double z);

// Inverse standard normal CDF for p in (0,1). Rational initial guess
// polished with one Halley step; absolute error < 1e-12 over (1e-12, 1-1e-12).
// Throws std::invalid_argument outside (0,1).
double normal_quantile(double p);

// Deterministic stream of pseudo-random numbers. All stochastic pieces of the
// library draw through this class so that a (config, seed) pair fixes every
// artifact byte. The gaussian uses Box-Muller instead of
// std::normal_distribution to stay independent of the standard library's
// implementation-defined draw sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0,1).
  double uniform();
  // Uniform on [lo,hi).
  double uniform(double lo, double hi);
  // Standard normal.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Uniform integer in [0,n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates shuffle of an index vector.
  void shuffle(std::vector<int>& indices);

  // Derives an unrelated child seed; used to give episodes / restarts
  // independent streams from one base seed.
  static std::uint64_t derive(std::uint64_t base, std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a 64-bit hash; used for config fingerprints in run manifests.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace lsmpc

#endif  // LSMPC_STATS_HPP_
