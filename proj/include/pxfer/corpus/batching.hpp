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
#include <cstdint>
#include <numeric>
#include <vector>

#include "pxfer/corpus/corpus.hpp"
#include "pxfer/nn/init.hpp"

namespace pxfer::corpus {

// Shuffled index batches. Items are shuffled per (seed, epoch), grouped into
// pools of 4 batches, sorted by length inside each pool to limit padding, and
// the resulting batches are shuffled again.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<UtteranceInfo>& items,
                                                          std::size_t batch_size, std::uint64_t seed,
                                                          std::uint64_t epoch) {
  if (batch_size < 1) throw InvalidConfig("batch_size must be at least 1");
  nn::Rng rng(nn::mix_seed(seed, 0xBA7C0000ull + epoch));
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());

  std::vector<std::vector<std::size_t>> batches;
  const std::size_t pool = 4 * batch_size;
  for (std::size_t p = 0; p < order.size(); p += pool) {
    auto first = order.begin() + std::ptrdiff_t(p);
    auto last = order.begin() + std::ptrdiff_t(std::min(order.size(), p + pool));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return items[a].frames < items[b].frames; });
    for (auto it = first; it < last; it += std::ptrdiff_t(std::min<std::size_t>(batch_size, std::size_t(last - it))))
      batches.emplace_back(it, it + std::ptrdiff_t(std::min<std::size_t>(batch_size, std::size_t(last - it))));
  }
  std::shuffle(batches.begin(), batches.end(), rng.engine());
  return batches;
}

// B x T x M zero-padded frames plus a B x T validity mask.
struct PaddedBatch {
  nn::Array<float> frames;
  nn::Array<float> mask;
  std::vector<std::size_t> lengths;

  std::size_t size() const { return lengths.size(); }
  std::size_t max_frames() const { return frames.dims.at(1); }
};

inline PaddedBatch pad_batch(const std::vector<const nn::Array<float>*>& mels) {
  if (mels.empty()) throw InvalidInput("cannot pad an empty batch");
  const std::size_t M = mels.front()->cols();
  std::size_t T = 0;
  for (const auto* m : mels) {
    if (m->rank() != 2 || m->cols() != M) throw InvalidInput("batch items have inconsistent mel shapes");
    T = std::max(T, m->rows());
  }
  PaddedBatch b;
  b.frames = nn::Array<float>({mels.size(), T, M});
  b.mask = nn::Array<float>({mels.size(), T});
  for (std::size_t i = 0; i < mels.size(); ++i) {
    const auto& m = *mels[i];
    std::copy(m.data.begin(), m.data.end(), b.frames.data.begin() + std::ptrdiff_t(i * T * M));
    std::fill_n(b.mask.data.begin() + std::ptrdiff_t(i * T), m.rows(), 1.0f);
    b.lengths.push_back(m.rows());
  }
  return b;
}

// Item i of a padded batch as a T x M array (including padding rows).
inline nn::Array<float> batch_item(const PaddedBatch& b, std::size_t i) {
  const std::size_t T = b.max_frames(), M = b.frames.dims.at(2);
  nn::Array<float> out({T, M});
  std::copy_n(b.frames.data.begin() + std::ptrdiff_t(i * T * M), T * M, out.data.begin());
  return out;
}

}  // namespace pxfer::corpus
