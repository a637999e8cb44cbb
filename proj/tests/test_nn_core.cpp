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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "pxfer/nn.hpp"
#include "support/gradcheck.hpp"

namespace nn = pxfer::nn;
using nn::Array;
using nn::Dims;
using nn::Tape;
using nn::Var;

namespace {

Array<double> random_array(Dims dims, std::mt19937_64& g, double lo = -1, double hi = 1) {
  Array<double> a(std::move(dims));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : a.data) v = d(g);
  return a;
}

// Instance norm written as plain loops over a [C x U x V] array.
Array<double> instance_norm_oracle(const Array<double>& k) {
  const std::size_t C = k.dims[0], N = k.dims[1] * k.dims[2];
  Array<double> out(k.dims);
  for (std::size_t c = 0; c < C; ++c) {
    double mu = 0;
    for (std::size_t i = 0; i < N; ++i) mu += k[c * N + i];
    mu /= N;
    double var = 0;
    for (std::size_t i = 0; i < N; ++i) var += (k[c * N + i] - mu) * (k[c * N + i] - mu);
    const double sigma = std::max(std::sqrt(var / N), 1e-5);
    for (std::size_t i = 0; i < N; ++i) out[c * N + i] = (k[c * N + i] - mu) / sigma;
  }
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Step-by-step GRU recurrence with explicit gate loops.
Array<double> gru_oracle(const Array<double>& x, const Array<double>& wx, const Array<double>& wh,
                         const Array<double>& bx, const Array<double>& bh, bool reverse) {
  const std::size_t T = x.dims[0], D = x.dims[1], H = wh.dims[0];
  Array<double> out({T, H});
  std::vector<double> h(H, 0.0);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    std::vector<double> next(H);
    for (std::size_t j = 0; j < H; ++j) {
      double ar = bx[j] + bh[j], au = bx[H + j] + bh[H + j], an_x = bx[2 * H + j], an_h = bh[2 * H + j];
      for (std::size_t d = 0; d < D; ++d) {
        ar += x.at(t, d) * wx.at(d, j);
        au += x.at(t, d) * wx.at(d, H + j);
        an_x += x.at(t, d) * wx.at(d, 2 * H + j);
      }
      for (std::size_t k = 0; k < H; ++k) {
        ar += h[k] * wh.at(k, j);
        au += h[k] * wh.at(k, H + j);
        an_h += h[k] * wh.at(k, 2 * H + j);
      }
      const double r = sigmoid(ar), u = sigmoid(au), n = std::tanh(an_x + r * an_h);
      next[j] = (1 - u) * n + u * h[j];
    }
    h = next;
    for (std::size_t j = 0; j < H; ++j) out.at(t, j) = h[j];
  }
  return out;
}

// Monte-Carlo estimate of E_q[log q(z) - log p(z)] for a diagonal Gaussian q.
double kl_monte_carlo(const std::vector<double>& mu, const std::vector<double>& logvar, std::size_t n,
                      std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd;
  double acc = 0;
  for (std::size_t s = 0; s < n; ++s) {
    double lq = 0, lp = 0;
    for (std::size_t h = 0; h < mu.size(); ++h) {
      const double sd = std::exp(0.5 * logvar[h]);
      const double eps = nd(g);
      const double z = mu[h] + sd * eps;
      lq += -0.5 * eps * eps - std::log(sd);
      lp += -0.5 * z * z;
    }
    acc += lq - lp;
  }
  return acc / double(n);
}

}  // namespace

// ---- instance norm -----------------------------------------------------------

TEST(InstanceNorm, TwoByTwoExample) {
  Array<double> k({1, 2, 2}, {1, 3, 1, 3});
  const auto out = nn::instance_norm_2d(k);
  const auto oracle = instance_norm_oracle(k);
  const std::vector<double> expect{-1, 1, -1, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(out[i], expect[i], 1e-12);
    EXPECT_NEAR(oracle[i], expect[i], 1e-12);
  }
  const auto st = nn::instance_norm_2d_stats(k);
  EXPECT_DOUBLE_EQ(st.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(st.std[0], 1.0);
}

TEST(InstanceNorm, AlreadyStandardizedChannelIsUnchanged) {
  Array<double> k({1, 2, 2}, {-1, 1, 1, -1});
  const auto out = nn::instance_norm_2d(k);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], k[i], 1e-9);
}

TEST(InstanceNorm, ConstantChannelMapsToZero) {
  Array<double> k({1, 2, 2}, 5.0);
  const auto out = nn::instance_norm_2d(k);
  for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(InstanceNorm, NonFiniteInputRejected) {
  Array<double> k({1, 2, 2}, {1, std::numeric_limits<double>::quiet_NaN(), 0, 0});
  EXPECT_THROW(nn::instance_norm_2d(k), pxfer::InvalidInput);
}

TEST(InstanceNorm, MatchesScalarOracleAndStandardizes) {
  std::mt19937_64 g(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 1 + trial % 4, U = 1 + trial % 5, V = 2 + trial % 3;
    auto k = random_array({C, U, V}, g, -3, 5);
    const auto out = nn::instance_norm_2d(k);
    const auto oracle = instance_norm_oracle(k);
    const std::size_t N = U * V;
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], oracle[i], 1e-12);
    for (std::size_t c = 0; c < C; ++c) {
      double m = 0, s = 0;
      for (std::size_t i = 0; i < N; ++i) m += out[c * N + i];
      m /= N;
      for (std::size_t i = 0; i < N; ++i) s += (out[c * N + i] - m) * (out[c * N + i] - m);
      EXPECT_NEAR(m, 0.0, 1e-5);
      EXPECT_NEAR(std::sqrt(s / N), 1.0, 1e-4);
    }
  }
}

TEST(InstanceNorm, InvariantToPerChannelAffineCorruption) {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> scale(0.1, 10), shift(-20, 20);
  for (int trial = 0; trial < 100; ++trial) {
    auto k = random_array({3, 4, 5}, g);
    auto corrupted = k;
    for (std::size_t c = 0; c < 3; ++c) {
      const double a = scale(g), b = shift(g);
      for (std::size_t i = 0; i < 20; ++i) corrupted[c * 20 + i] = a * k[c * 20 + i] + b;
    }
    const auto x = nn::instance_norm_2d(k);
    const auto y = nn::instance_norm_2d(corrupted);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-5);
  }
}

TEST(InstanceNorm, PaddingFramesAreInvisible) {
  std::mt19937_64 g(3);
  auto x = random_array({7, 4}, g);
  auto padded = x;
  padded.dims = {10, 4};
  padded.data.resize(40, 0.0);
  for (std::size_t i = 28; i < 40; ++i) padded[i] = 123.0;  // garbage in padding
  Tape<double> t;
  const auto a = nn::instance_norm_time(t.constant(x)).value();
  const auto b = nn::instance_norm_time(t.constant(padded), 7).value();
  for (std::size_t i = 0; i < 28; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  for (std::size_t i = 28; i < 40; ++i) EXPECT_EQ(b[i], 0.0);
}

// ---- conv ------------------------------------------------------------------

TEST(Conv1d, IdentityKernel) {
  Tape<double> t;
  auto x = t.constant(Array<double>({4, 1}, {1, -2, 3, 4}));
  auto w = t.constant(Array<double>({1, 1, 1}, {1}));
  auto b = t.constant(Array<double>({1}));
  auto y = nn::conv1d(x, w, b, nn::Conv1dSpec::same(1)).value();
  EXPECT_EQ(y.data, x.value().data);
}

TEST(Conv1d, OnesKernelSameZeroPadding) {
  Tape<double> t;
  auto x = t.constant(Array<double>({3, 1}, {1, 2, 3}));
  auto w = t.constant(Array<double>({3, 1, 1}, {1, 1, 1}));
  auto b = t.constant(Array<double>({1}));
  auto y = nn::conv1d(x, w, b, nn::Conv1dSpec::same(3)).value();
  EXPECT_EQ(y.data, (std::vector<double>{3, 6, 5}));
}

TEST(Conv1d, StrideShapeArithmetic) {
  Tape<double> t;
  auto x = t.constant(Array<double>({5, 1}, 1.0));
  auto w = t.constant(Array<double>({1, 1, 1}, {1}));
  auto b = t.constant(Array<double>({1}));
  EXPECT_EQ(nn::conv1d(x, w, b, nn::Conv1dSpec::valid(2)).value().dims, (Dims{3, 1}));
}

TEST(Conv1d, KernelWiderThanInputRejected) {
  Tape<double> t;
  auto x = t.constant(Array<double>({2, 1}, 1.0));
  auto w = t.constant(Array<double>({5, 1, 1}, 1.0));
  auto b = t.constant(Array<double>({1}));
  EXPECT_THROW(nn::conv1d(x, w, b, nn::Conv1dSpec::valid()), pxfer::InvalidConfig);
  EXPECT_THROW(nn::Conv1dSpec::same(4), pxfer::InvalidConfig);
}

TEST(Conv1d, ReplicatePaddingMatchesScalarOracle) {
  std::mt19937_64 g(5);
  auto x = random_array({6, 3}, g);
  auto w = random_array({3, 3, 2}, g);
  auto b = random_array({2}, g);
  Tape<double> t;
  auto y = nn::conv1d(t.constant(x), t.constant(w), t.constant(b), nn::Conv1dSpec::same(3, nn::PadMode::kReplicate))
               .value();
  for (std::size_t s = 0; s < 6; ++s)
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < 3; ++k) {
        const long i = std::clamp(long(s + k) - 1, 0L, 5L);
        for (std::size_t c = 0; c < 3; ++c) acc += x.at(std::size_t(i), c) * w[(k * 3 + c) * 2 + o];
      }
      EXPECT_NEAR(y.at(s, o), acc, 1e-12);
    }
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 g(1);
  auto x = random_array({1, 3, 4}, g);
  Tape<double> t;
  auto y = nn::conv2d(t.constant(x), t.constant(Array<double>({1, 1, 1, 1}, {1})), t.constant(Array<double>({1})),
                      nn::Conv2dSpec{})
               .value();
  EXPECT_EQ(y.data, x.data);
}

TEST(Conv2d, OnesKernelStrideTwo) {
  Tape<double> t;
  auto y = nn::conv2d(t.constant(Array<double>({1, 2, 2}, 1.0)), t.constant(Array<double>({1, 1, 2, 2}, 1.0)),
                      t.constant(Array<double>({1})), nn::Conv2dSpec{2, 2, 0, 0})
               .value();
  EXPECT_EQ(y.dims, (Dims{1, 1, 1}));
  EXPECT_EQ(y[0], 4.0);
}

TEST(Conv2d, StrideShapeArithmetic) {
  Tape<double> t;
  auto x = t.constant(Array<double>({1, 8, 8}, 1.0));
  auto y1 = nn::conv2d(x, t.constant(Array<double>({1, 1, 1, 1}, 1.0)), t.constant(Array<double>({1})),
                       nn::Conv2dSpec{2, 2, 0, 0});
  auto y3 = nn::conv2d(x, t.constant(Array<double>({2, 1, 3, 3}, 1.0)), t.constant(Array<double>({2})),
                       nn::Conv2dSpec{2, 2, 1, 1});
  EXPECT_EQ(y1.dims(), (Dims{1, 4, 4}));
  EXPECT_EQ(y3.dims(), (Dims{2, 4, 4}));
}

TEST(Conv2d, MatchesScalarOracle) {
  std::mt19937_64 g(9);
  auto x = random_array({2, 5, 4}, g);
  auto w = random_array({3, 2, 3, 3}, g);
  auto b = random_array({3}, g);
  Tape<double> t;
  auto y = nn::conv2d(t.constant(x), t.constant(w), t.constant(b), nn::Conv2dSpec{2, 1, 1, 1}).value();
  ASSERT_EQ(y.dims, (Dims{3, 3, 4}));
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t v = 0; v < 4; ++v) {
        double acc = b[o];
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
              const long iu = long(u * 2 + i) - 1, iv = long(v + j) - 1;
              if (iu < 0 || iu >= 5 || iv < 0 || iv >= 4) continue;
              acc += x[(c * 5 + iu) * 4 + iv] * w[((o * 2 + c) * 3 + i) * 3 + j];
            }
        EXPECT_NEAR(y[(o * 3 + u) * 4 + v], acc, 1e-12);
      }
}

// ---- GRU ---------------------------------------------------------------------

TEST(Gru, ZeroWeightsGiveZeroStates) {
  std::mt19937_64 g(2);
  Tape<double> t;
  auto x = t.constant(random_array({4, 3}, g));
  auto y = nn::gru(x, t.constant(Array<double>({3, 6})), t.constant(Array<double>({2, 6})),
                   t.constant(Array<double>({6})), t.constant(Array<double>({6})), nn::Direction::kForward)
               .value();
  for (double v : y.data) EXPECT_EQ(v, 0.0);
}

TEST(Gru, SingleFrameDirectionsAgree) {
  std::mt19937_64 g(4);
  Tape<double> t;
  auto x = t.constant(random_array({1, 3}, g));
  auto wx = t.constant(random_array({3, 6}, g));
  auto wh = t.constant(random_array({2, 6}, g));
  auto bx = t.constant(random_array({6}, g));
  auto bh = t.constant(random_array({6}, g));
  EXPECT_EQ(nn::gru(x, wx, wh, bx, bh, nn::Direction::kForward).value().data,
            nn::gru(x, wx, wh, bx, bh, nn::Direction::kBackward).value().data);
}

TEST(Gru, MatchesStepByStepOracle) {
  std::mt19937_64 g(1234);
  auto x = random_array({3, 2}, g);
  auto wx = random_array({2, 6}, g);
  auto wh = random_array({2, 6}, g);
  auto bx = random_array({6}, g);
  auto bh = random_array({6}, g);
  Tape<double> t;
  for (bool reverse : {false, true}) {
    auto y = nn::gru(t.constant(x), t.constant(wx), t.constant(wh), t.constant(bx), t.constant(bh),
                     reverse ? nn::Direction::kBackward : nn::Direction::kForward)
                 .value();
    auto o = gru_oracle(x, wx, wh, bx, bh, reverse);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], o[i], 1e-6);
  }
}

TEST(Gru, ValidLengthIgnoresPadding) {
  std::mt19937_64 g(8);
  auto x = random_array({5, 2}, g);
  auto padded = x;
  padded.dims = {8, 2};
  padded.data.resize(16, 9.0);
  auto wx = random_array({2, 9}, g), wh = random_array({3, 9}, g), bx = random_array({9}, g),
       bh = random_array({9}, g);
  Tape<double> t;
  for (auto dir : {nn::Direction::kForward, nn::Direction::kBackward}) {
    auto a = nn::gru(t.constant(x), t.constant(wx), t.constant(wh), t.constant(bx), t.constant(bh), dir).value();
    auto b = nn::gru(t.constant(padded), t.constant(wx), t.constant(wh), t.constant(bx), t.constant(bh), dir, 5)
                 .value();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    for (std::size_t i = a.size(); i < b.size(); ++i) EXPECT_EQ(b[i], 0.0);
  }
}

// ---- dense / softmax ---------------------------------------------------------

TEST(Dense, IdentityAndZeroWeights) {
  std::mt19937_64 g(6);
  auto x = random_array({3, 2}, g);
  Tape<double> t;
  auto id = nn::dense(t.constant(x), t.constant(Array<double>({2, 2}, {1, 0, 0, 1})), t.constant(Array<double>({2})));
  EXPECT_EQ(id.value().data, x.data);
  auto bias = nn::dense(t.constant(x), t.constant(Array<double>({2, 2})), t.constant(Array<double>({2}, {0.5, -2})));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(bias.value().at(r, 0), 0.5);
    EXPECT_EQ(bias.value().at(r, 1), -2.0);
  }
}

TEST(Dense, MatchesScalarOracle) {
  std::mt19937_64 g(10);
  auto x = random_array({2, 2}, g), w = random_array({2, 2}, g), b = random_array({2}, g);
  Tape<double> t;
  auto y = nn::dense(t.constant(x), t.constant(w), t.constant(b)).value();
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c)
      EXPECT_NEAR(y.at(r, c), b[c] + x.at(r, 0) * w.at(0, c) + x.at(r, 1) * w.at(1, c), 1e-14);
  EXPECT_THROW(nn::dense(t.constant(x), t.constant(Array<double>({3, 2})), t.constant(b)), pxfer::InvalidInput);
}

TEST(Softmax, Examples) {
  auto half = nn::softmax(Array<double>::vector({0, 0}));
  EXPECT_DOUBLE_EQ(half[0], 0.5);
  EXPECT_DOUBLE_EQ(half[1], 0.5);
  auto big = nn::softmax(Array<double>::vector({1000, -1000}));
  EXPECT_TRUE(big.all_finite());
  EXPECT_NEAR(big[0], 1.0, 1e-12);
  EXPECT_NEAR(big[1], 0.0, 1e-12);
  auto p = nn::softmax(Array<double>::vector({1, 2, 3}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], std::exp(i + 1.0) / z, 1e-12);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  std::mt19937_64 g(12);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = random_array({std::size_t(2 + trial % 7)}, g, -10, 10);
    auto p = nn::softmax(x);
    double s = 0;
    for (double v : p.data) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
    auto shifted = x;
    const double c = shift(g);
    for (auto& v : shifted.data) v += c;
    auto q = nn::softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-6);
  }
}

// ---- KL ----------------------------------------------------------------------

TEST(Kl, ClosedFormCasesAgreeWithMonteCarlo) {
  EXPECT_EQ(nn::kl_diag_std_normal(Array<double>::vector({0}), Array<double>::vector({0})), 0.0);
  const double a = nn::kl_diag_std_normal(Array<double>::vector({1}), Array<double>::vector({0}));
  EXPECT_DOUBLE_EQ(a, 0.5);
  EXPECT_NEAR(kl_monte_carlo({1}, {0}, 1000000, 1), a, 1e-2);
  const double b = nn::kl_diag_std_normal(Array<double>::vector({0}), Array<double>::vector({std::log(4.0)}));
  EXPECT_NEAR(b, 0.5 * (4 - 1 - std::log(4.0)), 1e-12);
  EXPECT_NEAR(b, 0.8069, 1e-4);
  EXPECT_NEAR(kl_monte_carlo({0}, {std::log(4.0)}, 1000000, 2), b, 1e-2);
}

TEST(Kl, NonNegativeAndZeroOnlyAtPrior) {
  std::mt19937_64 g(13);
  for (int trial = 0; trial < 200; ++trial) {
    auto mu = random_array({4}, g, -2, 2), lv = random_array({4}, g, -3, 3);
    EXPECT_GT(nn::kl_diag_std_normal(mu, lv), 0.0);
  }
  EXPECT_EQ(nn::kl_diag_std_normal(Array<double>({4}), Array<double>({4})), 0.0);
}

// ---- backward ----------------------------------------------------------------

TEST(Backward, SumGivesOnes) {
  nn::ParameterSet<double> ps;
  auto& x = ps.add("x", Array<double>({2, 3}, 0.7));
  Tape<double> t;
  t.backward(nn::sum(t.param(x)));
  for (double g : x.grad.data) EXPECT_EQ(g, 1.0);
}

TEST(Backward, ConstantLossGivesZeroGradients) {
  nn::ParameterSet<double> ps;
  auto& x = ps.add("x", Array<double>({3}, 1.0));
  Tape<double> t;
  t.param(x);
  t.backward(t.constant(Array<double>::scalar(4.0)));
  for (double g : x.grad.data) EXPECT_EQ(g, 0.0);
}

TEST(Backward, ForeignVariableRejected) {
  Tape<double> a, b;
  auto x = a.constant(Array<double>({2}, 1.0));
  auto y = b.constant(Array<double>({2}, 1.0));
  EXPECT_THROW(nn::add(x, y), pxfer::InternalError);
}

TEST(Backward, FrozenParametersReceiveNoGradient) {
  nn::ParameterSet<double> ps;
  auto& x = ps.add("x", Array<double>({2}, 1.0));
  Tape<double> t;
  t.freeze(ps);
  t.backward(nn::sum(t.param(x)));
  for (double g : x.grad.data) EXPECT_EQ(g, 0.0);
}

class FiniteDifference : public ::testing::Test {
 protected:
  void expect_ok(nn::ParameterSet<double>& ps, const std::function<Var<double>(Tape<double>&)>& f) {
    auto r = pxfer::testing::check_gradients(ps, f);
    EXPECT_LT(r.max_rel_error, 1e-4) << "worst tensor: " << r.worst;
    EXPECT_GT(r.checked, 0u);
  }
  std::mt19937_64 g{99};
};

TEST_F(FiniteDifference, Elementwise) {
  nn::ParameterSet<double> ps;
  auto& a = ps.add("a", random_array({3, 4}, g));
  auto& b = ps.add("b", random_array({3, 4}, g));
  auto& k = ps.add("k", random_array({1}, g));
  expect_ok(ps, [&](Tape<double>& t) {
    auto A = t.param(a), B = t.param(b);
    auto y = nn::add(nn::mul(nn::tanh(A), nn::sigmoid(B)), nn::sub(nn::exp(nn::scale(A, 0.3)), B));
    y = nn::scale_by(nn::leaky_relu(y, 0.2), t.param(k));
    return nn::sum(nn::mul(y, y));
  });
}

TEST_F(FiniteDifference, MatmulDenseTransposeShapes) {
  nn::ParameterSet<double> ps;
  auto& x = ps.add("x", random_array({3, 4}, g));
  auto& w = ps.add("w", random_array({4, 2}, g));
  auto& b = ps.add("b", random_array({2}, g));
  auto& q = ps.add("q", random_array({5, 4}, g));
  expect_ok(ps, [&](Tape<double>& t) {
    auto y = nn::dense(t.param(x), t.param(w), t.param(b));
    auto s = nn::matmul_nt(t.param(x), t.param(q));  // 3x5
    auto st = nn::transpose(s);                        // 5x3
    auto c = nn::concat_cols<double>({y, nn::slice_cols(nn::transpose(st), 1, 4)});
    auto gsel = nn::gather_rows(c, {2, 0, 2, 1});
    auto tiled = nn::tile_rows(nn::mean_rows(gsel), 3);
    auto r = nn::reshape(tiled, {5, 3});
    auto p = nn::permute3(nn::reshape(r, {3, 1, 5}), {2, 0, 1});
    return nn::sum(nn::mul(nn::tanh(p), nn::tanh(p)));
  });
}

TEST_F(FiniteDifference, Conv1dBothPaddingModes) {
  nn::ParameterSet<double> ps;
  auto& x = ps.add("x", random_array({7, 3}, g));
  auto& w = ps.add("w", random_array({3, 3, 4}, g));
  auto& b = ps.add("b", random_array({4}, g));
  for (auto mode : {nn::PadMode::kZero, nn::PadMode::kReplicate}) {
    expect_ok(ps, [&](Tape<double>& t) {
      auto y = nn::conv1d(t.param(x), t.param(w), t.param(b), nn::Conv1dSpec{2, 1, mode});
      return nn::sum(nn::tanh(y));
    });
  }
}

TEST_F(FiniteDifference, Conv2d) {
  nn::ParameterSet<double> ps;
  auto& x = ps.add("x", random_array({2, 5, 6}, g));
  auto& w = ps.add("w", random_array({3, 2, 3, 3}, g));
  auto& b = ps.add("b", random_array({3}, g));
  expect_ok(ps, [&](Tape<double>& t) {
    auto y = nn::conv2d(t.param(x), t.param(w), t.param(b), nn::Conv2dSpec{2, 2, 1, 1});
    return nn::sum(nn::tanh(y));
  });
}

TEST_F(FiniteDifference, InstanceNorm) {
  nn::ParameterSet<double> ps;
  auto& x = ps.add("x", random_array({3, 2, 4}, g));
  auto& y = ps.add("y", random_array({6, 3}, g));
  auto& target = ps.add("target", random_array({3, 2, 4}, g));
  expect_ok(ps, [&](Tape<double>& t) {
    auto a = nn::instance_norm_2d(t.param(x));
    auto b = nn::instance_norm_time(t.param(y), 4);
    return nn::add(nn::sum(nn::mul(a, t.param(target))), nn::sum(nn::tanh(b)));
  });
}

TEST_F(FiniteDifference, GruBothDirections) {
  nn::ParameterSet<double> ps;
  nn::Rng rng(3);
  auto& x = ps.add("x", random_array({4, 3}, g));
  nn::Gru<double> cell(ps, "gru", 3, 2, rng);
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps[i].name.find(".b") != std::string::npos) ps[i].value = random_array(ps[i].value.dims, g);
  for (auto dir : {nn::Direction::kForward, nn::Direction::kBackward}) {
    expect_ok(ps, [&](Tape<double>& t) {
      auto y = cell(t, t.param(x), dir);
      return nn::sum(nn::mul(y, y));
    });
  }
}

TEST_F(FiniteDifference, EmbeddingSoftmaxCrossEntropy) {
  nn::ParameterSet<double> ps;
  auto& table = ps.add("table", random_array({5, 3}, g));
  auto& logits = ps.add("logits", random_array({4, 3}, g));
  expect_ok(ps, [&](Tape<double>& t) {
    auto e = nn::embedding(t.param(table), {1, 4, 4, 0});
    auto p = nn::softmax_rows(nn::add(e, t.param(logits)));
    auto ce = nn::cross_entropy(t.param(logits), {0, 2, 1, 1});
    return nn::add(nn::sum(nn::mul(p, p)), ce);
  });
}

TEST_F(FiniteDifference, KlAndL1) {
  nn::ParameterSet<double> ps;
  auto& mu = ps.add("mu", random_array({5, 2}, g));
  auto& lv = ps.add("lv", random_array({5, 2}, g));
  auto target = random_array({5, 2}, g);
  expect_ok(ps, [&](Tape<double>& t) {
    auto kl = nn::kl_diag_std_normal(t.param(mu), t.param(lv), 4);
    auto l1 = nn::l1_loss(t.param(mu), target, 3);
    return nn::add(kl, l1);
  });
}

TEST(KlGraph, MatchesValueFunction) {
  std::mt19937_64 g(14);
  auto mu = random_array({3, 2}, g), lv = random_array({3, 2}, g);
  Tape<double> t;
  EXPECT_NEAR(nn::kl_diag_std_normal(t.constant(mu), t.constant(lv)).value()[0], nn::kl_diag_std_normal(mu, lv),
              1e-12);
}

TEST(Adam, DescendsQuadratic) {
  nn::ParameterSet<double> ps;
  auto& x = ps.add("x", Array<double>({2}, {3.0, -2.0}));
  nn::Adam<double> opt(ps, nn::AdamConfig{0.1});
  for (int i = 0; i < 300; ++i) {
    Tape<double> t;
    auto v = t.param(x);
    t.backward(nn::sum(nn::mul(v, v)));
    opt.step();
  }
  EXPECT_NEAR(x.value[0], 0.0, 1e-2);
  EXPECT_NEAR(x.value[1], 0.0, 1e-2);
}
