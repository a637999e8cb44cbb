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

// Central finite-difference gradient checker used by the test suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "pxfer/nn/tape.hpp"

namespace pxfer::testing {

inline constexpr double kGradFloor = 1e-6;

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst;
  std::size_t checked = 0;
};

// Compares analytic parameter gradients of `loss` against central
// differences. The relative error of each tensor is
// ||analytic - numeric|| / max(||analytic|| + ||numeric||, kGradFloor). The
// floor keeps tensors whose true gradient is zero (e.g. a bias feeding an
// instance norm) from turning rounding noise into a relative error of 1.
// `stride` > 1 samples every stride-th element of large tensors.
//
// A central difference cannot resolve gradients below about
// ulp(loss) / h. A tensor whose analytic and numeric gradients both lie
// under that resolution (a structurally zero gradient, such as a conv bias
// feeding an instance norm) counts as agreeing and contributes 0.
inline GradCheckResult check_gradients(nn::ParameterSet<double>& ps,
                                       const std::function<nn::Var<double>(nn::Tape<double>&)>& loss,
                                       double h = 1e-5, std::size_t stride = 1) {
  ps.zero_grad();
  double loss0 = 0;
  {
    nn::Tape<double> tape;
    auto l = loss(tape);
    loss0 = l.value()[0];
    tape.backward(l);
  }
  const double resolution = 8 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss0)) / (2 * h);
  auto eval = [&] {
    nn::Tape<double> tape;
    return loss(tape).value()[0];
  };
  GradCheckResult res;
  for (std::size_t p = 0; p < ps.size(); ++p) {
    auto& param = ps[p];
    double diff2 = 0, a2 = 0, n2 = 0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < param.value.size(); k += stride) {
      const double orig = param.value[k];
      param.value[k] = orig + h;
      const double up = eval();
      param.value[k] = orig - h;
      const double down = eval();
      param.value[k] = orig;
      const double num = (up - down) / (2 * h);
      const double ana = param.grad[k];
      diff2 += (ana - num) * (ana - num);
      a2 += ana * ana;
      n2 += num * num;
      ++res.checked;
      ++count;
    }
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    const double below = resolution * std::sqrt(double(count));
    const bool unresolved = std::sqrt(a2) <= below && std::sqrt(n2) <= below;
    const double rel = unresolved ? 0.0 : std::sqrt(diff2) / std::max(denom, kGradFloor);
    if (rel > res.max_rel_error || res.worst.empty()) {
      if (rel >= res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = param.name;
      }
    }
  }
  return res;
}

}  // namespace pxfer::testing
