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

#include <cstddef>
#include <vector>

#include "pxfer/errors.hpp"
#include "pxfer/nn.hpp"

namespace pxfer::models {

// Row indices that extend a length-T sequence to length n by mirror reflection
// (no edge repeat). A single frame is repeated.
inline std::vector<std::size_t> reflect_indices(std::size_t T, std::size_t n) {
  if (T == 0) throw InvalidInput("cannot reflect-pad an empty sequence");
  std::vector<std::size_t> idx(n);
  if (T == 1) return idx;
  const std::size_t period = 2 * (T - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = i % period;
    idx[i] = r < T ? r : period - r;
  }
  return idx;
}

template <typename S>
nn::Var<S> leaky(nn::Var<S> x, double slope) {
  return nn::leaky_relu(x, S(slope));
}

// Requires a 2-D [T x C] input with the given column count and T >= 1.
template <typename S>
void require_frames(const nn::Var<S>& x, std::size_t cols, const char* what) {
  const auto& v = x.value();
  if (v.rank() != 2 || v.cols() != cols || v.rows() == 0)
    throw InvalidInput(std::string(what) + ": expected [T x " + std::to_string(cols) + "] with T >= 1, got " +
                       nn::dims_str(v.dims));
}

}  // namespace pxfer::models
