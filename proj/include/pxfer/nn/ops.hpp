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

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "pxfer/nn/array.hpp"
#include "pxfer/nn/tape.hpp"

namespace pxfer::nn {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
Eigen::Map<RowMat<S>> mat(Array<S>& a, std::size_t rows, std::size_t cols) {
  return Eigen::Map<RowMat<S>>(a.ptr(), Eigen::Index(rows), Eigen::Index(cols));
}

template <typename S>
Eigen::Map<const RowMat<S>> mat(const Array<S>& a, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const RowMat<S>>(a.ptr(), Eigen::Index(rows), Eigen::Index(cols));
}

template <typename S>
Eigen::Map<RowMat<S>> mat(Array<S>& a) {
  return mat(a, a.rows(), a.cols());
}

template <typename S>
Eigen::Map<const RowMat<S>> mat(const Array<S>& a) {
  return mat(a, a.rows(), a.cols());
}

namespace detail {

inline void require_same(const Dims& a, const Dims& b, const char* what) {
  if (a != b) throw InvalidInput(std::string(what) + ": dims " + dims_str(a) + " vs " + dims_str(b));
}

template <typename S, typename F, typename DF>
Var<S> unary(Var<S> a, F f, DF df) {
  const Array<S>& x = a.value();
  Array<S> y(x.dims);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape->emit(std::move(y), {a}, [a, df](Tape<S>& t, const Array<S>& g) {
    if (!a.needs_grad()) return;
    const Array<S>& x = t.value(a);
    Array<S>& ga = t.grad(a);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i]);
  });
}

}  // namespace detail

// ---- linear algebra --------------------------------------------------------

// [N x K] * [K x M]
template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  const Array<S>& A = a.value();
  const Array<S>& B = b.value();
  require_rank(A, 2, "matmul lhs");
  require_rank(B, 2, "matmul rhs");
  if (A.dims[1] != B.dims[0])
    throw InvalidInput("matmul: inner dims " + dims_str(A.dims) + " * " + dims_str(B.dims));
  Array<S> C({A.dims[0], B.dims[1]});
  mat(C).noalias() = mat(A) * mat(B);
  return a.tape->emit(std::move(C), {a, b}, [a, b](Tape<S>& t, const Array<S>& g) {
    const Array<S>& A = t.value(a);
    const Array<S>& B = t.value(b);
    if (a.needs_grad()) mat(t.grad(a)).noalias() += mat(g) * mat(B).transpose();
    if (b.needs_grad()) mat(t.grad(b)).noalias() += mat(A).transpose() * mat(g);
  });
}

// [N x K] * [M x K]^T
template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  const Array<S>& A = a.value();
  const Array<S>& B = b.value();
  require_rank(A, 2, "matmul_nt lhs");
  require_rank(B, 2, "matmul_nt rhs");
  if (A.dims[1] != B.dims[1])
    throw InvalidInput("matmul_nt: inner dims " + dims_str(A.dims) + " * " + dims_str(B.dims) + "^T");
  Array<S> C({A.dims[0], B.dims[0]});
  mat(C).noalias() = mat(A) * mat(B).transpose();
  return a.tape->emit(std::move(C), {a, b}, [a, b](Tape<S>& t, const Array<S>& g) {
    const Array<S>& A = t.value(a);
    const Array<S>& B = t.value(b);
    if (a.needs_grad()) mat(t.grad(a)).noalias() += mat(g) * mat(B);
    if (b.needs_grad()) mat(t.grad(b)).noalias() += mat(g).transpose() * mat(A);
  });
}

template <typename S>
Var<S> transpose(Var<S> a) {
  const Array<S>& A = a.value();
  require_rank(A, 2, "transpose");
  Array<S> C({A.dims[1], A.dims[0]});
  mat(C) = mat(A).transpose();
  return a.tape->emit(std::move(C), {a}, [a](Tape<S>& t, const Array<S>& g) {
    if (a.needs_grad()) mat(t.grad(a)) += mat(g).transpose();
  });
}

// Adds a length-M bias to every row of an [.. x M] array.
template <typename S>
Var<S> add_bias(Var<S> x, Var<S> bias) {
  const Array<S>& X = x.value();
  const Array<S>& b = bias.value();
  if (b.size() != X.cols())
    throw InvalidInput("add_bias: bias " + dims_str(b.dims) + " vs input " + dims_str(X.dims));
  Array<S> y = X;
  const std::size_t cols = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] += b[c];
  return x.tape->emit(std::move(y), {x, bias}, [x, bias, cols](Tape<S>& t, const Array<S>& g) {
    if (x.needs_grad()) {
      Array<S>& gx = t.grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (bias.needs_grad()) {
      Array<S>& gb = t.grad(bias);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
    }
  });
}

// Affine map per row: x [N x In] * w [In x Out] + b [Out].
template <typename S>
Var<S> dense(Var<S> x, Var<S> w, Var<S> b) {
  return add_bias(matmul(x, w), b);
}

// ---- elementwise -----------------------------------------------------------

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require_same(a.dims(), b.dims(), "add");
  Array<S> y = a.value();
  const Array<S>& B = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += B[i];
  return a.tape->emit(std::move(y), {a, b}, [a, b](Tape<S>& t, const Array<S>& g) {
    if (a.needs_grad()) {
      Array<S>& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.needs_grad()) {
      Array<S>& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require_same(a.dims(), b.dims(), "sub");
  Array<S> y = a.value();
  const Array<S>& B = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= B[i];
  return a.tape->emit(std::move(y), {a, b}, [a, b](Tape<S>& t, const Array<S>& g) {
    if (a.needs_grad()) {
      Array<S>& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.needs_grad()) {
      Array<S>& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::require_same(a.dims(), b.dims(), "mul");
  Array<S> y = a.value();
  const Array<S>& B = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= B[i];
  return a.tape->emit(std::move(y), {a, b}, [a, b](Tape<S>& t, const Array<S>& g) {
    const Array<S>& A = t.value(a);
    const Array<S>& B = t.value(b);
    if (a.needs_grad()) {
      Array<S>& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (b.needs_grad()) {
      Array<S>& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

template <typename S>
Var<S> scale(Var<S> a, S k) {
  return detail::unary(a, [k](S x) { return k * x; }, [k](S) { return k; });
}

// Multiplies every element of `a` by the single value held in `k`.
template <typename S>
Var<S> scale_by(Var<S> a, Var<S> k) {
  if (k.value().size() != 1) throw InvalidInput("scale_by: factor must hold one value");
  const S kv = k.value()[0];
  Array<S> y = a.value();
  for (auto& v : y.data) v *= kv;
  return a.tape->emit(std::move(y), {a, k}, [a, k](Tape<S>& t, const Array<S>& g) {
    const Array<S>& A = t.value(a);
    const S kv = t.value(k)[0];
    if (a.needs_grad()) {
      Array<S>& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * kv;
    }
    if (k.needs_grad()) {
      S acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * A[i];
      t.grad(k)[0] += acc;
    }
  });
}

template <typename S>
Var<S> leaky_relu(Var<S> a, S slope) {
  return detail::unary(
      a, [slope](S x) { return x > 0 ? x : slope * x; },
      [slope](S x) { return x > 0 ? S(1) : slope; });
}

template <typename S>
Var<S> tanh(Var<S> a) {
  return detail::unary(
      a, [](S x) { return std::tanh(x); },
      [](S x) {
        const S y = std::tanh(x);
        return S(1) - y * y;
      });
}

template <typename S>
S sigmoid_value(S x) {
  return x >= 0 ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  return detail::unary(
      a, [](S x) { return sigmoid_value(x); },
      [](S x) {
        const S y = sigmoid_value(x);
        return y * (S(1) - y);
      });
}

template <typename S>
Var<S> exp(Var<S> a) {
  return detail::unary(a, [](S x) { return std::exp(x); }, [](S x) { return std::exp(x); });
}

// ---- shape -----------------------------------------------------------------

template <typename S>
Var<S> reshape(Var<S> a, Dims dims) {
  if (numel(dims) != a.value().size())
    throw InvalidInput("reshape: " + dims_str(a.dims()) + " -> " + dims_str(dims));
  Array<S> y(std::move(dims), a.value().data);
  return a.tape->emit(std::move(y), {a}, [a](Tape<S>& t, const Array<S>& g) {
    if (!a.needs_grad()) return;
    Array<S>& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// Concatenates 2-D arrays along the column axis; all inputs share the row count.
template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> offs;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p.value(), 2, "concat_cols");
    if (p.value().rows() != rows)
      throw AlignmentError("concat_cols: row mismatch " + dims_str(p.dims()) + " vs " +
                           std::to_string(rows) + " rows");
    offs.push_back(total);
    total += p.value().cols();
  }
  Array<S> y({rows, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Array<S>& P = parts[k].value();
    const std::size_t c = P.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(P.ptr() + r * c, c, y.ptr() + r * total + offs[k]);
  }
  return parts[0].tape->emit(std::move(y), parts, [parts, offs, total](Tape<S>& t, const Array<S>& g) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (!parts[k].needs_grad()) continue;
      Array<S>& gp = t.grad(parts[k]);
      const std::size_t c = gp.cols();
      for (std::size_t r = 0; r < gp.rows(); ++r)
        for (std::size_t j = 0; j < c; ++j) gp[r * c + j] += g[r * total + offs[k] + j];
    }
  });
}

template <typename S>
Var<S> slice_cols(Var<S> a, std::size_t begin, std::size_t end) {
  const Array<S>& A = a.value();
  require_rank(A, 2, "slice_cols");
  if (begin > end || end > A.cols()) throw InvalidInput("slice_cols: range out of bounds");
  const std::size_t rows = A.rows(), cols = A.cols(), w = end - begin;
  Array<S> y({rows, w});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(A.ptr() + r * cols + begin, w, y.ptr() + r * w);
  return a.tape->emit(std::move(y), {a}, [a, begin, w, cols](Tape<S>& t, const Array<S>& g) {
    if (!a.needs_grad()) return;
    Array<S>& ga = t.grad(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t j = 0; j < w; ++j) ga[r * cols + begin + j] += g[r * w + j];
  });
}

// Selects rows by index (repeats allowed). Gradients scatter-add back.
template <typename S>
Var<S> gather_rows(Var<S> a, std::vector<std::size_t> idx) {
  const Array<S>& A = a.value();
  require_rank(A, 2, "gather_rows");
  const std::size_t cols = A.cols();
  Array<S> y({idx.size(), cols});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= A.rows()) throw InvalidInput("gather_rows: index out of range");
    std::copy_n(A.ptr() + idx[r] * cols, cols, y.ptr() + r * cols);
  }
  return a.tape->emit(std::move(y), {a}, [a, idx = std::move(idx), cols](Tape<S>& t, const Array<S>& g) {
    if (!a.needs_grad()) return;
    Array<S>& ga = t.grad(a);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < cols; ++j) ga[idx[r] * cols + j] += g[r * cols + j];
  });
}

template <typename S>
Var<S> slice_rows(Var<S> a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.value().rows()) throw InvalidInput("slice_rows: range out of bounds");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return gather_rows(a, std::move(idx));
}

// Repeats a length-M vector into an [N x M] array.
template <typename S>
Var<S> tile_rows(Var<S> v, std::size_t n) {
  const std::size_t m = v.value().size();
  Var<S> row = reshape(v, Dims{1, m});
  return gather_rows(row, std::vector<std::size_t>(n, 0));
}

// Reorders a rank-3 array: out.dims[i] = in.dims[perm[i]].
template <typename S>
Var<S> permute3(Var<S> a, std::array<std::size_t, 3> perm) {
  const Array<S>& A = a.value();
  require_rank(A, 3, "permute3");
  const Dims& d = A.dims;
  Dims od{d[perm[0]], d[perm[1]], d[perm[2]]};
  const std::size_t in_strides[3] = {d[1] * d[2], d[2], 1};
  std::vector<std::size_t> src(A.size());
  std::size_t o = 0;
  for (std::size_t i = 0; i < od[0]; ++i)
    for (std::size_t j = 0; j < od[1]; ++j)
      for (std::size_t k = 0; k < od[2]; ++k)
        src[o++] = i * in_strides[perm[0]] + j * in_strides[perm[1]] + k * in_strides[perm[2]];
  Array<S> y(od);
  for (std::size_t i = 0; i < src.size(); ++i) y[i] = A[src[i]];
  return a.tape->emit(std::move(y), {a}, [a, src = std::move(src)](Tape<S>& t, const Array<S>& g) {
    if (!a.needs_grad()) return;
    Array<S>& ga = t.grad(a);
    for (std::size_t i = 0; i < src.size(); ++i) ga[src[i]] += g[i];
  });
}

// ---- reductions ------------------------------------------------------------

template <typename S>
Var<S> sum(Var<S> a) {
  S acc = 0;
  for (S v : a.value().data) acc += v;
  return a.tape->emit(Array<S>::scalar(acc), {a}, [a](Tape<S>& t, const Array<S>& g) {
    if (!a.needs_grad()) return;
    for (auto& v : t.grad(a).data) v += g[0];
  });
}

template <typename S>
Var<S> mean(Var<S> a) {
  return scale(sum(a), S(1) / S(a.value().size()));
}

// Mean over the first `valid` rows of an [N x M] array -> [M].
template <typename S>
Var<S> mean_rows(Var<S> a, std::size_t valid) {
  const Array<S>& A = a.value();
  require_rank(A, 2, "mean_rows");
  if (valid == 0 || valid > A.rows()) throw InvalidInput("mean_rows: bad valid length");
  const std::size_t cols = A.cols();
  Array<S> y({cols});
  for (std::size_t r = 0; r < valid; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[c] += A[r * cols + c];
  for (auto& v : y.data) v /= S(valid);
  return a.tape->emit(std::move(y), {a}, [a, valid, cols](Tape<S>& t, const Array<S>& g) {
    if (!a.needs_grad()) return;
    Array<S>& ga = t.grad(a);
    for (std::size_t r = 0; r < valid; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[c] / S(valid);
  });
}

template <typename S>
Var<S> mean_rows(Var<S> a) {
  return mean_rows(a, a.value().rows());
}

// Sum of a list of scalar variables.
template <typename S>
Var<S> add_n(const std::vector<Var<S>>& xs) {
  if (xs.empty()) throw InvalidInput("add_n: no inputs");
  Var<S> acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

// ---- lookup ----------------------------------------------------------------

// Rows of `table` [V x E] selected by ids.
template <typename S>
Var<S> embedding(Var<S> table, const std::vector<int>& ids) {
  const std::size_t vocab = table.value().rows();
  std::vector<std::size_t> idx;
  idx.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || std::size_t(id) >= vocab)
      throw InvalidInput("embedding: id " + std::to_string(id) + " outside inventory of " +
                         std::to_string(vocab));
    idx.push_back(std::size_t(id));
  }
  return gather_rows(table, std::move(idx));
}

}  // namespace pxfer::nn
