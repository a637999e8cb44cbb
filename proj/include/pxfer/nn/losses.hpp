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

// Numerically stable softmax of a flat vector.
template <typename S>
Array<S> softmax(const Array<S>& x) {
  if (x.size() == 0) throw InvalidInput("softmax: empty input");
  Array<S> y(x.dims);
  const S mx = *std::max_element(x.data.begin(), x.data.end());
  S z = 0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (y[i] = std::exp(x[i] - mx));
  for (auto& v : y.data) v /= z;
  return y;
}

// Row-wise softmax of an [N x K] array.
template <typename S>
Var<S> softmax_rows(Var<S> x) {
  const Array<S>& X = x.value();
  const std::size_t K = X.cols(), N = X.rows();
  Array<S> y(X.dims);
  for (std::size_t r = 0; r < N; ++r) {
    const S* xr = X.ptr() + r * K;
    S* yr = y.ptr() + r * K;
    const S mx = *std::max_element(xr, xr + K);
    S z = 0;
    for (std::size_t k = 0; k < K; ++k) z += (yr[k] = std::exp(xr[k] - mx));
    for (std::size_t k = 0; k < K; ++k) yr[k] /= z;
  }
  Array<S> saved = y;
  return x.tape->emit(std::move(y), {x}, [x, K, N, y = std::move(saved)](Tape<S>& t, const Array<S>& g) {
    if (!x.needs_grad()) return;
    Array<S>& gx = t.grad(x);
    for (std::size_t r = 0; r < N; ++r) {
      S dot = 0;
      for (std::size_t k = 0; k < K; ++k) dot += g[r * K + k] * y[r * K + k];
      for (std::size_t k = 0; k < K; ++k) gx[r * K + k] += y[r * K + k] * (g[r * K + k] - dot);
    }
  });
}

// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
template <typename S>
Var<S> cross_entropy(Var<S> logits, const std::vector<int>& labels) {
  const Array<S>& X = logits.value();
  require_rank(X, 2, "cross_entropy");
  const std::size_t N = X.rows(), K = X.cols();
  if (labels.size() != N) throw InvalidInput("cross_entropy: label count mismatch");
  Array<S> probs(X.dims);
  S loss = 0;
  for (std::size_t r = 0; r < N; ++r) {
    if (labels[r] < 0 || std::size_t(labels[r]) >= K) throw InvalidInput("cross_entropy: label out of range");
    const S* xr = X.ptr() + r * K;
    const S mx = *std::max_element(xr, xr + K);
    S z = 0;
    for (std::size_t k = 0; k < K; ++k) z += (probs[r * K + k] = std::exp(xr[k] - mx));
    for (std::size_t k = 0; k < K; ++k) probs[r * K + k] /= z;
    loss -= xr[labels[r]] - mx - std::log(z);
  }
  loss /= S(N);
  return logits.tape->emit(Array<S>::scalar(loss), {logits},
                           [logits, labels, probs = std::move(probs), N, K](Tape<S>& t, const Array<S>& g) {
                             if (!logits.needs_grad()) return;
                             Array<S>& gx = t.grad(logits);
                             for (std::size_t r = 0; r < N; ++r)
                               for (std::size_t k = 0; k < K; ++k) {
                                 const S onehot = std::size_t(labels[r]) == k ? S(1) : S(0);
                                 gx[r * K + k] += g[0] * (probs[r * K + k] - onehot) / S(N);
                               }
                           });
}

// KL(N(mean, exp(logvar)) || N(0, I)) = 0.5 * sum(mean^2 + exp(logvar) - 1 - logvar).
template <typename S>
S kl_diag_std_normal(const Array<S>& mean, const Array<S>& logvar) {
  if (mean.size() != logvar.size()) throw InvalidInput("kl: mean/logvar size mismatch");
  S acc = 0;
  for (std::size_t i = 0; i < mean.size(); ++i)
    acc += mean[i] * mean[i] + std::exp(logvar[i]) - S(1) - logvar[i];
  return S(0.5) * acc;
}

// Summed KL over the first `valid` rows of [T x H] posterior parameters.
template <typename S>
Var<S> kl_diag_std_normal(Var<S> mean, Var<S> logvar, std::size_t valid) {
  if (mean.dims() != logvar.dims()) throw InvalidInput("kl: mean/logvar dims mismatch");
  const std::size_t H = mean.value().cols();
  const std::size_t n = valid * H;
  if (n > mean.value().size()) throw InvalidInput("kl: valid length out of range");
  const Array<S>& M = mean.value();
  const Array<S>& L = logvar.value();
  S acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += M[i] * M[i] + std::exp(L[i]) - S(1) - L[i];
  return mean.tape->emit(Array<S>::scalar(S(0.5) * acc), {mean, logvar},
                         [mean, logvar, n](Tape<S>& t, const Array<S>& g) {
                           if (mean.needs_grad()) {
                             const Array<S>& M = t.value(mean);
                             Array<S>& gm = t.grad(mean);
                             for (std::size_t i = 0; i < n; ++i) gm[i] += g[0] * M[i];
                           }
                           if (logvar.needs_grad()) {
                             const Array<S>& L = t.value(logvar);
                             Array<S>& gl = t.grad(logvar);
                             for (std::size_t i = 0; i < n; ++i) gl[i] += g[0] * S(0.5) * (std::exp(L[i]) - S(1));
                           }
                         });
}

template <typename S>
Var<S> kl_diag_std_normal(Var<S> mean, Var<S> logvar) {
  return kl_diag_std_normal(mean, logvar, mean.value().rows());
}

// Mean absolute error over the first `valid` rows.
template <typename S>
Var<S> l1_loss(Var<S> pred, const Array<S>& target, std::size_t valid) {
  const Array<S>& P = pred.value();
  if (P.cols() != target.cols() || valid > P.rows() || valid > target.rows() || valid == 0)
    throw AlignmentError("l1_loss: " + dims_str(P.dims) + " vs " + dims_str(target.dims));
  const std::size_t n = valid * P.cols();
  S acc = 0;
  std::vector<S> sign(n);
  for (std::size_t i = 0; i < n; ++i) {
    const S d = P[i] - target[i];
    acc += std::abs(d);
    sign[i] = d > 0 ? S(1) : (d < 0 ? S(-1) : S(0));
  }
  return pred.tape->emit(Array<S>::scalar(acc / S(n)), {pred},
                         [pred, sign = std::move(sign), n](Tape<S>& t, const Array<S>& g) {
                           if (!pred.needs_grad()) return;
                           Array<S>& gp = t.grad(pred);
                           for (std::size_t i = 0; i < n; ++i) gp[i] += g[0] * sign[i] / S(n);
                         });
}

template <typename S>
Var<S> l1_loss(Var<S> pred, const Array<S>& target) {
  return l1_loss(pred, target, pred.value().rows());
}

template <typename S>
struct HingeLosses {
  S discriminator;
  S generator;
};

// L_D = -mean(min(0, -1 + d_real)) - mean(min(0, -1 - d_fake)),
// L_G = -mean(d_fake).
template <typename S>
HingeLosses<S> hinge_losses(const std::vector<S>& d_real, const std::vector<S>& d_fake) {
  if (d_real.empty() || d_fake.empty()) throw InvalidInput("hinge_losses: empty batch");
  S real = 0, fake = 0, gen = 0;
  for (S d : d_real) real += std::min(S(0), S(-1) + d);
  for (S d : d_fake) {
    fake += std::min(S(0), S(-1) - d);
    gen += d;
  }
  return HingeLosses<S>{-real / S(d_real.size()) - fake / S(d_fake.size()), -gen / S(d_fake.size())};
}

template <typename S>
Var<S> hinge_discriminator_loss(Var<S> d_real, Var<S> d_fake) {
  const Array<S>& R = d_real.value();
  const Array<S>& F = d_fake.value();
  const HingeLosses<S> v = hinge_losses(R.data, F.data);
  return d_real.tape->emit(Array<S>::scalar(v.discriminator), {d_real, d_fake},
                           [d_real, d_fake](Tape<S>& t, const Array<S>& g) {
                             if (d_real.needs_grad()) {
                               const Array<S>& R = t.value(d_real);
                               Array<S>& gr = t.grad(d_real);
                               for (std::size_t i = 0; i < R.size(); ++i)
                                 if (R[i] < S(1)) gr[i] -= g[0] / S(R.size());
                             }
                             if (d_fake.needs_grad()) {
                               const Array<S>& F = t.value(d_fake);
                               Array<S>& gf = t.grad(d_fake);
                               for (std::size_t i = 0; i < F.size(); ++i)
                                 if (F[i] > S(-1)) gf[i] += g[0] / S(F.size());
                             }
                           });
}

// Same arithmetic as hinge_losses(...).generator.
template <typename S>
Var<S> hinge_generator_loss(Var<S> d_fake) {
  const Array<S>& F = d_fake.value();
  if (F.size() == 0) throw InvalidInput("hinge_generator_loss: empty batch");
  S gen = 0;
  for (S d : F.data) gen += d;
  return d_fake.tape->emit(Array<S>::scalar(-gen / S(F.size())), {d_fake}, [d_fake](Tape<S>& t, const Array<S>& g) {
    if (!d_fake.needs_grad()) return;
    Array<S>& gf = t.grad(d_fake);
    for (std::size_t i = 0; i < gf.size(); ++i) gf[i] -= g[0] / S(gf.size());
  });
}

}  // namespace pxfer::nn
