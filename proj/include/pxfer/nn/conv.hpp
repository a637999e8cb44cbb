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
#include <string>
#include <vector>

#include "pxfer/nn/ops.hpp"

namespace pxfer::nn {

enum class PadMode { kZero, kReplicate };

struct Conv1dSpec {
  std::size_t stride = 1;
  std::size_t pad = 0;  // frames added on each side
  PadMode mode = PadMode::kZero;

  // "same" output length at stride 1; requires an odd kernel.
  static Conv1dSpec same(std::size_t kernel, PadMode mode = PadMode::kZero) {
    if (kernel % 2 == 0) throw InvalidConfig("same padding needs an odd kernel width");
    return Conv1dSpec{1, (kernel - 1) / 2, mode};
  }
  static Conv1dSpec valid(std::size_t stride = 1) { return Conv1dSpec{stride, 0, PadMode::kZero}; }
};

inline std::size_t conv_out_len(std::size_t n, std::size_t kernel, std::size_t stride,
                                std::size_t pad) {
  if (stride == 0) throw InvalidConfig("conv stride must be positive");
  if (n + 2 * pad < kernel)
    throw InvalidConfig("conv kernel of width " + std::to_string(kernel) +
                        " is wider than the padded input of length " + std::to_string(n + 2 * pad));
  return (n + 2 * pad - kernel) / stride + 1;
}

namespace detail {

// Source row for output step t and tap k, or -1 for a zero tap.
inline long conv_src(std::size_t t, std::size_t k, const Conv1dSpec& spec, std::size_t n) {
  long i = long(t * spec.stride + k) - long(spec.pad);
  if (i >= 0 && i < long(n)) return i;
  if (spec.mode == PadMode::kZero) return -1;
  return i < 0 ? 0 : long(n) - 1;
}

}  // namespace detail

// Cross-correlation over time.
//   x: [T x Cin], w: [K x Cin x Cout], b: [Cout] -> [T' x Cout]
template <typename S>
Var<S> conv1d(Var<S> x, Var<S> w, Var<S> b, Conv1dSpec spec) {
  const Array<S>& X = x.value();
  const Array<S>& W = w.value();
  require_rank(X, 2, "conv1d input");
  require_rank(W, 3, "conv1d kernel");
  const std::size_t T = X.dims[0], cin = X.dims[1];
  const std::size_t K = W.dims[0], cout = W.dims[2];
  if (W.dims[1] != cin)
    throw InvalidInput("conv1d: kernel " + dims_str(W.dims) + " vs input " + dims_str(X.dims));
  if (b.value().size() != cout) throw InvalidInput("conv1d: bias width mismatch");
  const std::size_t To = conv_out_len(T, K, spec.stride, spec.pad);

  Array<S> col({To, K * cin});
  for (std::size_t t = 0; t < To; ++t)
    for (std::size_t k = 0; k < K; ++k) {
      const long src = detail::conv_src(t, k, spec, T);
      if (src >= 0) std::copy_n(X.ptr() + std::size_t(src) * cin, cin, col.ptr() + (t * K + k) * cin);
    }
  Array<S> y({To, cout});
  mat(y).noalias() = mat(col) * mat(W, K * cin, cout);
  Var<S> out = x.tape->emit(
      std::move(y), {x, w},
      [x, w, col = std::move(col), spec, T, cin, K, cout, To](Tape<S>& t, const Array<S>& g) {
        const Array<S>& W = t.value(w);
        if (w.needs_grad()) mat(t.grad(w), K * cin, cout).noalias() += mat(col).transpose() * mat(g);
        if (x.needs_grad()) {
          Array<S> dcol({To, K * cin});
          mat(dcol).noalias() = mat(g) * mat(W, K * cin, cout).transpose();
          Array<S>& gx = t.grad(x);
          for (std::size_t s = 0; s < To; ++s)
            for (std::size_t k = 0; k < K; ++k) {
              const long src = detail::conv_src(s, k, spec, T);
              if (src < 0) continue;
              S* dst = gx.ptr() + std::size_t(src) * cin;
              const S* from = dcol.ptr() + (s * K + k) * cin;
              for (std::size_t c = 0; c < cin; ++c) dst[c] += from[c];
            }
        }
      });
  return add_bias(out, b);
}

struct Conv2dSpec {
  std::size_t stride_u = 1, stride_v = 1;
  std::size_t pad_u = 0, pad_v = 0;  // zero padding on each side
};

// Cross-correlation over two spatial axes.
//   x: [Cin x U x V], w: [Cout x Cin x KU x KV], b: [Cout] -> [Cout x U' x V']
template <typename S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b, Conv2dSpec spec) {
  const Array<S>& X = x.value();
  const Array<S>& W = w.value();
  require_rank(X, 3, "conv2d input");
  require_rank(W, 4, "conv2d kernel");
  const std::size_t cin = X.dims[0], U = X.dims[1], V = X.dims[2];
  const std::size_t cout = W.dims[0], KU = W.dims[2], KV = W.dims[3];
  if (W.dims[1] != cin)
    throw InvalidInput("conv2d: kernel " + dims_str(W.dims) + " vs input " + dims_str(X.dims));
  if (b.value().size() != cout) throw InvalidInput("conv2d: bias width mismatch");
  const std::size_t Uo = conv_out_len(U, KU, spec.stride_u, spec.pad_u);
  const std::size_t Vo = conv_out_len(V, KV, spec.stride_v, spec.pad_v);
  const std::size_t P = Uo * Vo, R = cin * KU * KV;

  // For every (patch row r, output position p) the flat source index, or -1.
  std::vector<long> src(R * P, -1);
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ku = 0; ku < KU; ++ku)
      for (std::size_t kv = 0; kv < KV; ++kv) {
        const std::size_t r = (c * KU + ku) * KV + kv;
        for (std::size_t u = 0; u < Uo; ++u) {
          const long iu = long(u * spec.stride_u + ku) - long(spec.pad_u);
          if (iu < 0 || iu >= long(U)) continue;
          for (std::size_t v = 0; v < Vo; ++v) {
            const long iv = long(v * spec.stride_v + kv) - long(spec.pad_v);
            if (iv < 0 || iv >= long(V)) continue;
            src[r * P + u * Vo + v] = long((c * U + std::size_t(iu)) * V + std::size_t(iv));
          }
        }
      }
  Array<S> col({R, P});
  for (std::size_t i = 0; i < src.size(); ++i)
    if (src[i] >= 0) col[i] = X[std::size_t(src[i])];

  Array<S> y({cout, Uo, Vo});
  mat(y, cout, P).noalias() = mat(W, cout, R) * mat(col);
  const S* bp = b.value().ptr();
  for (std::size_t c = 0; c < cout; ++c)
    for (std::size_t p = 0; p < P; ++p) y[c * P + p] += bp[c];

  return x.tape->emit(
      std::move(y), {x, w, b},
      [x, w, b, col = std::move(col), src = std::move(src), cout, R, P](Tape<S>& t, const Array<S>& g) {
        if (w.needs_grad()) mat(t.grad(w), cout, R).noalias() += mat(g, cout, P) * mat(col).transpose();
        if (b.needs_grad()) {
          Array<S>& gb = t.grad(b);
          for (std::size_t c = 0; c < cout; ++c)
            for (std::size_t p = 0; p < P; ++p) gb[c] += g[c * P + p];
        }
        if (x.needs_grad()) {
          Array<S> dcol({R, P});
          mat(dcol).noalias() = mat(t.value(w), cout, R).transpose() * mat(g, cout, P);
          Array<S>& gx = t.grad(x);
          for (std::size_t i = 0; i < src.size(); ++i)
            if (src[i] >= 0) gx[std::size_t(src[i])] += dcol[i];
        }
      });
}

}  // namespace pxfer::nn
