// Copyright 2026 The pxfer Authors
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
#include <random>

#include "pxfer/nn/array.hpp"

namespace pxfer::nn {

// Seeded generator shared by initialization, sampling and shuffling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream from a base seed and a tag (e.g. a step index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <typename S>
Array<S> uniform_array(Dims dims, double limit, Rng& rng) {
  Array<S> a(std::move(dims));
  for (auto& v : a.data) v = S(rng.uniform(-limit, limit));
  return a;
}

template <typename S>
Array<S> normal_array(Dims dims, double stddev, Rng& rng) {
  Array<S> a(std::move(dims));
  for (auto& v : a.data) v = S(stddev * rng.normal());
  return a;
}

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename S>
Array<S> glorot_uniform(Dims dims, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform_array<S>(std::move(dims), std::sqrt(6.0 / double(fan_in + fan_out)), rng);
}

}  // namespace pxfer::nn
