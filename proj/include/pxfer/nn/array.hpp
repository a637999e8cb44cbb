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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pxfer/errors.hpp"

namespace pxfer::nn {

using Dims = std::vector<std::size_t>;

inline std::size_t numel(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string dims_str(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor. Rank 0 is a scalar with one element.
template <typename S>
struct Array {
  Dims dims;
  std::vector<S> data;

  Array() = default;
  explicit Array(Dims d, S fill = S(0)) : dims(std::move(d)), data(numel(dims), fill) {}
  Array(Dims d, std::vector<S> values) : dims(std::move(d)), data(std::move(values)) {
    if (data.size() != numel(dims))
      throw InvalidInput("array data length " + std::to_string(data.size()) +
                         " does not match dims " + dims_str(dims));
  }

  static Array scalar(S v) { return Array(Dims{}, std::vector<S>{v}); }
  static Array vector(std::initializer_list<S> v) {
    return Array(Dims{v.size()}, std::vector<S>(v));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return dims.size(); }
  std::size_t dim(std::size_t i) const { return dims.at(i); }
  // Rows/cols of a matrix view: the last axis is the column axis.
  std::size_t cols() const { return dims.empty() ? 1 : dims.back(); }
  std::size_t rows() const { return dims.empty() ? 1 : size() / std::max<std::size_t>(cols(), 1); }

  S& operator[](std::size_t i) { return data[i]; }
  const S& operator[](std::size_t i) const { return data[i]; }
  S& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const S& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](S v) { return std::isfinite(v); });
  }

  template <typename T>
  Array<T> cast() const {
    Array<T> out;
    out.dims = dims;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool operator==(const Array& o) const { return dims == o.dims && data == o.data; }
};

template <typename S>
void require_finite(const Array<S>& a, const char* what) {
  if (!a.all_finite()) throw InvalidInput(std::string(what) + ": non-finite value");
}

template <typename S>
void require_rank(const Array<S>& a, std::size_t rank, const char* what) {
  if (a.rank() != rank)
    throw InvalidInput(std::string(what) + ": expected rank " + std::to_string(rank) +
                       ", got " + dims_str(a.dims));
}

}  // namespace pxfer::nn
