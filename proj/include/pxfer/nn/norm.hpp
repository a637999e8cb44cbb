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
#include <vector>

#include "pxfer/nn/ops.hpp"

namespace pxfer::nn {

// Guard on the per-channel standard deviation. A constant channel maps to zeros.
inline constexpr double kInstanceNormEps = 1e-5;

template <typename S>
struct GaussianStats {
  std::vector<S> mean;
  std::vector<S> std;  // already max(sigma, eps)
};

namespace detail {

// Channel c, spatial position i lives at c * cs + i * ss. Only the first
// `valid` positions take part; positions past it are emitted as zeros.
struct ChannelLayout {
  std::size_t channels, positions, valid, cs, ss;
};

template <typename S>
GaussianStats<S> channel_stats(const Array<S>& x, const ChannelLayout& L, S eps) {
  GaussianStats<S> st{std::vector<S>(L.channels), std::vector<S>(L.channels)};
  for (std::size_t c = 0; c < L.channels; ++c) {
    double m = 0;
    for (std::size_t i = 0; i < L.valid; ++i) m += x[c * L.cs + i * L.ss];
    m /= double(L.valid);
    double v = 0;
    for (std::size_t i = 0; i < L.valid; ++i) {
      const double d = x[c * L.cs + i * L.ss] - m;
      v += d * d;
    }
    v /= double(L.valid);
    st.mean[c] = S(m);
    st.std[c] = std::max(S(std::sqrt(v)), eps);
  }
  return st;
}

template <typename S>
Var<S> instance_norm_impl(Var<S> x, ChannelLayout L, S eps) {
  const Array<S>& X = x.value();
  require_finite(X, "instance_norm");
  if (L.valid == 0 || L.valid > L.positions) throw InvalidInput("instance_norm: empty channel");
  GaussianStats<S> st = channel_stats(X, L, eps);
  Array<S> y(X.dims);
  for (std::size_t c = 0; c < L.channels; ++c)
    for (std::size_t i = 0; i < L.valid; ++i) {
      const std::size_t o = c * L.cs + i * L.ss;
      y[o] = (X[o] - st.mean[c]) / st.std[c];
    }
  return x.tape->emit(std::move(y), {x}, [x, L, st, eps](Tape<S>& t, const Array<S>& g) {
    if (!x.needs_grad()) return;
    const Array<S>& X = t.value(x);
    Array<S>& gx = t.grad(x);
    const S n = S(L.valid);
    for (std::size_t c = 0; c < L.channels; ++c) {
      const S s = st.std[c];
      const bool clamped = !(s > eps);
      S mg = 0, mgy = 0;
      for (std::size_t i = 0; i < L.valid; ++i) {
        const std::size_t o = c * L.cs + i * L.ss;
        const S yi = (X[o] - st.mean[c]) / s;
        mg += g[o];
        mgy += g[o] * yi;
      }
      mg /= n;
      mgy /= n;
      for (std::size_t i = 0; i < L.valid; ++i) {
        const std::size_t o = c * L.cs + i * L.ss;
        const S yi = (X[o] - st.mean[c]) / s;
        gx[o] += (g[o] - mg - (clamped ? S(0) : yi * mgy)) / s;
      }
    }
  });
}

}  // namespace detail

// Normalizes each channel of a [C x U x V] array by its own mean and standard
// deviation over all U*V positions.
template <typename S>
Var<S> instance_norm_2d(Var<S> k, S eps = S(kInstanceNormEps)) {
  require_rank(k.value(), 3, "instance_norm_2d");
  const Dims& d = k.dims();
  const std::size_t n = d[1] * d[2];
  return detail::instance_norm_impl(k, detail::ChannelLayout{d[0], n, n, n, 1}, eps);
}

// Same normalization on a time-major [T x C] array, where each column is a
// channel with spatial extent T x 1. Only the first `valid` frames are used;
// later (padding) frames come out as zeros.
template <typename S>
Var<S> instance_norm_time(Var<S> x, std::size_t valid, S eps = S(kInstanceNormEps)) {
  require_rank(x.value(), 2, "instance_norm_time");
  const Dims& d = x.dims();
  return detail::instance_norm_impl(x, detail::ChannelLayout{d[1], d[0], valid, 1, d[1]}, eps);
}

template <typename S>
Var<S> instance_norm_time(Var<S> x, S eps = S(kInstanceNormEps)) {
  return instance_norm_time(x, x.value().rows(), eps);
}

template <typename S>
Array<S> instance_norm_2d(const Array<S>& k, S eps = S(kInstanceNormEps)) {
  Tape<S> tape;
  return instance_norm_2d(tape.constant(k), eps).value();
}

template <typename S>
GaussianStats<S> instance_norm_2d_stats(const Array<S>& k, S eps = S(kInstanceNormEps)) {
  require_rank(k, 3, "instance_norm_2d_stats");
  const std::size_t n = k.dims[1] * k.dims[2];
  return detail::channel_stats(k, detail::ChannelLayout{k.dims[0], n, n, n, 1}, eps);
}

}  // namespace pxfer::nn
