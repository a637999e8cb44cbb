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

#include "pxfer/nn/conv.hpp"
#include "pxfer/nn/gru.hpp"
#include "pxfer/nn/init.hpp"
#include "pxfer/nn/ops.hpp"

namespace pxfer::nn {

template <typename S>
class Dense {
 public:
  Dense(ParameterSet<S>& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : w_(&ps.add(name + ".w", glorot_uniform<S>({in, out}, in, out, rng))),
        b_(&ps.add(name + ".b", Array<S>({out}))) {}

  Var<S> operator()(Tape<S>& t, Var<S> x) const { return dense(x, t.param(*w_), t.param(*b_)); }

  Parameter<S>& weight() { return *w_; }
  Parameter<S>& bias() { return *b_; }
  std::size_t in() const { return w_->value.dims[0]; }
  std::size_t out() const { return w_->value.dims[1]; }

 private:
  Parameter<S>* w_;
  Parameter<S>* b_;
};

// Kernel stored as [K x Cin x Cout].
template <typename S>
class Conv1d {
 public:
  Conv1d(ParameterSet<S>& ps, const std::string& name, std::size_t cin, std::size_t cout,
         std::size_t kernel, Rng& rng)
      : w_(&ps.add(name + ".w", glorot_uniform<S>({kernel, cin, cout}, kernel * cin, kernel * cout, rng))),
        b_(&ps.add(name + ".b", Array<S>({cout}))) {}

  Var<S> operator()(Tape<S>& t, Var<S> x, Conv1dSpec spec) const {
    return conv1d(x, t.param(*w_), t.param(*b_), spec);
  }

  std::size_t kernel() const { return w_->value.dims[0]; }
  std::size_t out() const { return w_->value.dims[2]; }

 private:
  Parameter<S>* w_;
  Parameter<S>* b_;
};

// Kernel stored as [Cout x Cin x KU x KV].
template <typename S>
class Conv2d {
 public:
  Conv2d(ParameterSet<S>& ps, const std::string& name, std::size_t cin, std::size_t cout,
         std::size_t kernel, Rng& rng)
      : w_(&ps.add(name + ".w", glorot_uniform<S>({cout, cin, kernel, kernel}, cin * kernel * kernel,
                                                  cout * kernel * kernel, rng))),
        b_(&ps.add(name + ".b", Array<S>({cout}))) {}

  Var<S> operator()(Tape<S>& t, Var<S> x, Conv2dSpec spec) const {
    return conv2d(x, t.param(*w_), t.param(*b_), spec);
  }

  std::size_t out() const { return w_->value.dims[0]; }

 private:
  Parameter<S>* w_;
  Parameter<S>* b_;
};

template <typename S>
class Gru {
 public:
  Gru(ParameterSet<S>& ps, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng) {
    const double lim = 1.0 / std::sqrt(double(hidden));
    wx_ = &ps.add(name + ".wx", uniform_array<S>({in, 3 * hidden}, lim, rng));
    wh_ = &ps.add(name + ".wh", uniform_array<S>({hidden, 3 * hidden}, lim, rng));
    bx_ = &ps.add(name + ".bx", Array<S>({3 * hidden}));
    bh_ = &ps.add(name + ".bh", Array<S>({3 * hidden}));
  }

  Var<S> operator()(Tape<S>& t, Var<S> x, Direction dir) const {
    return gru(x, t.param(*wx_), t.param(*wh_), t.param(*bx_), t.param(*bh_), dir);
  }

  std::size_t hidden() const { return wh_->value.dims[0]; }

 private:
  Parameter<S>* wx_;
  Parameter<S>* wh_;
  Parameter<S>* bx_;
  Parameter<S>* bh_;
};

// Forward and backward GRUs whose outputs are concatenated as [fwd | bwd].
template <typename S>
class BiGru {
 public:
  BiGru(ParameterSet<S>& ps, const std::string& name, std::size_t in, std::size_t hidden_per_dir, Rng& rng)
      : fwd_(ps, name + ".fwd", in, hidden_per_dir, rng), bwd_(ps, name + ".bwd", in, hidden_per_dir, rng) {}

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return concat_cols<S>({fwd_(t, x, Direction::kForward), bwd_(t, x, Direction::kBackward)});
  }

  std::size_t width() const { return 2 * fwd_.hidden(); }

 private:
  Gru<S> fwd_;
  Gru<S> bwd_;
};

template <typename S>
class Embedding {
 public:
  Embedding(ParameterSet<S>& ps, const std::string& name, std::size_t vocab, std::size_t width, Rng& rng)
      : table_(&ps.add(name + ".table", normal_array<S>({vocab, width}, 0.3, rng))) {}

  Var<S> operator()(Tape<S>& t, const std::vector<int>& ids) const { return embedding(t.param(*table_), ids); }

  Parameter<S>& table() { return *table_; }

 private:
  Parameter<S>* table_;
};

}  // namespace pxfer::nn
