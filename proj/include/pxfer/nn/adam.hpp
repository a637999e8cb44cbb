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
#include <map>
#include <string>
#include <vector>

#include "pxfer/nn/tape.hpp"

namespace pxfer::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
};

// Adaptive moment estimation over one ParameterSet.
template <typename S>
class Adam {
 public:
  Adam(ParameterSet<S>& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.dims);
      v_.emplace_back(params[i].value.dims);
    }
  }

  // Applies one update from the accumulated gradients, then clears them.
  // Returns the gradient norm before clipping.
  double step() {
    double sq = 0;
    for (std::size_t i = 0; i < params_->size(); ++i)
      for (S g : (*params_)[i].grad.data) sq += double(g) * double(g);
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm");
    const double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    const S b1 = S(cfg_.beta1), b2 = S(cfg_.beta2);
    const S lr = S(cfg_.lr * std::sqrt(c2) / c1);
    const S eps = S(cfg_.eps * std::sqrt(c2));
    for (std::size_t i = 0; i < params_->size(); ++i) {
      Parameter<S>& p = (*params_)[i];
      Array<S>& m = m_[i];
      Array<S>& v = v_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const S g = S(double(p.grad[k]) * clip);
        m[k] = b1 * m[k] + (S(1) - b1) * g;
        v[k] = b2 * v[k] + (S(1) - b2) * g * g;
        p.value[k] -= lr * m[k] / (std::sqrt(v[k]) + eps);
      }
      p.zero_grad();
    }
    return norm;
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // Moments keyed "<prefix>.m/<param>" and "<prefix>.v/<param>", plus "<prefix>.t".
  void export_state(const std::string& prefix, std::map<std::string, Array<S>>& out) const {
    for (std::size_t i = 0; i < params_->size(); ++i) {
      out[prefix + ".m/" + (*params_)[i].name] = m_[i];
      out[prefix + ".v/" + (*params_)[i].name] = v_[i];
    }
    out[prefix + ".t"] = Array<S>::scalar(S(t_));
  }

  void import_state(const std::string& prefix, const std::map<std::string, Array<S>>& in) {
    for (std::size_t i = 0; i < params_->size(); ++i) {
      const std::string& n = (*params_)[i].name;
      auto m = in.find(prefix + ".m/" + n);
      auto v = in.find(prefix + ".v/" + n);
      if (m == in.end() || v == in.end()) throw FormatError("optimizer state missing for " + n);
      if (m->second.dims != m_[i].dims || v->second.dims != v_[i].dims)
        throw FormatError("optimizer state shape mismatch for " + n);
      m_[i] = m->second;
      v_[i] = v->second;
    }
    auto t = in.find(prefix + ".t");
    if (t == in.end()) throw FormatError("optimizer step count missing");
    t_ = std::uint64_t(t->second[0]);
  }

 private:
  ParameterSet<S>* params_;
  AdamConfig cfg_;
  std::vector<Array<S>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace pxfer::nn
