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
#include <cstddef>
#include <vector>

#include "pxfer/nn/ops.hpp"

namespace pxfer::nn {

enum class Direction { kForward, kBackward };

// Gated recurrent unit over a [T x D] sequence with a zero initial state.
// Gate blocks in the 3H axis are ordered (reset, update, candidate):
//   r = sigmoid(x Wr + bxr + h Ur + bhr)
//   u = sigmoid(x Wu + bxu + h Uu + bhu)
//   n = tanh(x Wn + bxn + r * (h Un + bhn))
//   h' = (1 - u) * n + u * h
// The backward direction consumes the sequence in reverse and writes state t
// at row t, so both directions are time-aligned. Rows at or past `valid`
// are zero and the backward direction starts from row valid - 1.
template <typename S>
Var<S> gru(Var<S> x, Var<S> wx, Var<S> wh, Var<S> bx, Var<S> bh, Direction dir, std::size_t valid) {
  const Array<S>& X = x.value();
  require_rank(X, 2, "gru input");
  const std::size_t T = X.dims[0], D = X.dims[1];
  const Array<S>& Wh = wh.value();
  require_rank(Wh, 2, "gru recurrent weights");
  const std::size_t H = Wh.dims[0];
  if (Wh.dims[1] != 3 * H || wx.value().dims != Dims{D, 3 * H} || bx.value().size() != 3 * H ||
      bh.value().size() != 3 * H)
    throw InvalidInput("gru: weight dims do not match input " + dims_str(X.dims) + " and state " +
                       std::to_string(H));
  if (T == 0 || valid == 0 || valid > T) throw InvalidInput("gru: empty sequence");

  // Input projections for all steps at once.
  Array<S> gx({T, 3 * H});
  mat(gx).noalias() = mat(X) * mat(wx.value());
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < 3 * H; ++j) gx[t * 3 * H + j] += bx.value()[j];

  struct Cache {
    Array<S> r, u, n, ghn, hprev;
  };
  Cache c{Array<S>({T, H}), Array<S>({T, H}), Array<S>({T, H}), Array<S>({T, H}), Array<S>({T, H})};
  Array<S> h_out({T, H});
  std::vector<S> h(H, S(0)), gh(3 * H);
  const S* bhp = bh.value().ptr();
  for (std::size_t step = 0; step < valid; ++step) {
    const std::size_t t = dir == Direction::kForward ? step : valid - 1 - step;
    Eigen::Map<const RowMat<S>> hv(h.data(), 1, Eigen::Index(H));
    Eigen::Map<RowMat<S>> ghv(gh.data(), 1, Eigen::Index(3 * H));
    ghv.noalias() = hv * mat(Wh);
    const S* g = gx.ptr() + t * 3 * H;
    for (std::size_t j = 0; j < H; ++j) {
      const S r = sigmoid_value(g[j] + gh[j] + bhp[j]);
      const S u = sigmoid_value(g[H + j] + gh[H + j] + bhp[H + j]);
      const S hn = gh[2 * H + j] + bhp[2 * H + j];
      const S n = std::tanh(g[2 * H + j] + r * hn);
      const std::size_t o = t * H + j;
      c.r[o] = r;
      c.u[o] = u;
      c.n[o] = n;
      c.ghn[o] = hn;
      c.hprev[o] = h[j];
      h[j] = (S(1) - u) * n + u * h[j];
      h_out[o] = h[j];
    }
  }

  return x.tape->emit(
      std::move(h_out), {x, wx, wh, bx, bh},
      [x, wx, wh, bx, bh, dir, valid, T, D, H, c = std::move(c)](Tape<S>& tp, const Array<S>& gout) {
        const Array<S>& Wh = tp.value(wh);
        Array<S> dgx({T, 3 * H});  // gradient w.r.t. input pre-activations
        Array<S> dgh({T, 3 * H});  // gradient w.r.t. recurrent pre-activations (incl. bias)
        std::vector<S> dh_next(H, S(0)), dh(H), dhp(H);
        for (std::size_t step = valid; step-- > 0;) {
          const std::size_t t = dir == Direction::kForward ? step : valid - 1 - step;
          S* dgxt = dgx.ptr() + t * 3 * H;
          S* dght = dgh.ptr() + t * 3 * H;
          for (std::size_t j = 0; j < H; ++j) {
            const std::size_t o = t * H + j;
            const S r = c.r[o], u = c.u[o], n = c.n[o], hp = c.hprev[o];
            const S d = gout[o] + dh_next[j];
            const S dn = d * (S(1) - u);
            const S du = d * (hp - n);
            dhp[j] = d * u;
            const S dan = dn * (S(1) - n * n);
            const S dar = dan * c.ghn[o] * r * (S(1) - r);
            const S dau = du * u * (S(1) - u);
            dgxt[j] = dar;
            dgxt[H + j] = dau;
            dgxt[2 * H + j] = dan;
            dght[j] = dar;
            dght[H + j] = dau;
            dght[2 * H + j] = dan * r;
          }
          Eigen::Map<const RowMat<S>> dghv(dght, 1, Eigen::Index(3 * H));
          Eigen::Map<RowMat<S>> dhv(dh.data(), 1, Eigen::Index(H));
          dhv.noalias() = dghv * mat(Wh).transpose();
          for (std::size_t j = 0; j < H; ++j) dh_next[j] = dhp[j] + dh[j];
        }
        if (wh.needs_grad()) mat(tp.grad(wh)).noalias() += mat(c.hprev).transpose() * mat(dgh);
        if (bh.needs_grad()) {
          Array<S>& g = tp.grad(bh);
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < 3 * H; ++j) g[j] += dgh[t * 3 * H + j];
        }
        if (bx.needs_grad()) {
          Array<S>& g = tp.grad(bx);
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < 3 * H; ++j) g[j] += dgx[t * 3 * H + j];
        }
        if (wx.needs_grad()) mat(tp.grad(wx)).noalias() += mat(tp.value(x)).transpose() * mat(dgx);
        if (x.needs_grad()) mat(tp.grad(x)).noalias() += mat(dgx) * mat(tp.value(wx)).transpose();
      });
}

template <typename S>
Var<S> gru(Var<S> x, Var<S> wx, Var<S> wh, Var<S> bx, Var<S> bh, Direction dir) {
  return gru(x, wx, wh, bx, bh, dir, x.value().rows());
}

}  // namespace pxfer::nn
