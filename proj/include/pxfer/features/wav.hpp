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
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pxfer/errors.hpp"
#include "pxfer/io.hpp"

namespace pxfer::features {

struct Wav {
  int sample_rate = 16000;
  std::vector<double> samples;  // mono, nominal range [-1, 1]
};

// Mono 16-bit PCM or 32-bit float RIFF/WAVE. Multi-channel input is averaged.
inline Wav decode_wav(const std::vector<std::uint8_t>& bytes, const std::string& what = "wav") {
  io::ByteReader r(bytes.data(), bytes.size(), what);
  if (r.bytes(4) != "RIFF") throw FormatError(what + ": not a RIFF file");
  r.u32();
  if (r.bytes(4) != "WAVE") throw FormatError(what + ": not a WAVE file");
  int format = 0, channels = 0, bits = 0;
  Wav wav;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    const std::string id = r.bytes(4);
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      format = r.u16();
      channels = r.u16();
      wav.sample_rate = int(r.u32());
      r.u32();
      r.u16();
      bits = r.u16();
      if (size > 16) r.bytes(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt || channels <= 0) throw FormatError(what + ": data chunk before fmt chunk");
      const bool pcm16 = format == 1 && bits == 16;
      const bool f32 = format == 3 && bits == 32;
      if (!pcm16 && !f32) throw FormatError(what + ": only 16-bit PCM and 32-bit float are supported");
      const std::size_t frame_bytes = std::size_t(bits / 8 * channels);
      const std::size_t frames = size / frame_bytes;
      wav.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0;
        for (int c = 0; c < channels; ++c)
          acc += pcm16 ? double(std::int16_t(r.u16())) / 32768.0 : double(r.f32());
        wav.samples[i] = acc / channels;
      }
      return wav;
    } else {
      r.bytes(size + (size & 1));
    }
  }
  throw FormatError(what + ": no data chunk");
}

inline Wav read_wav(const std::filesystem::path& path) { return decode_wav(io::read_file(path), path.string()); }

// 16-bit PCM mono.
inline std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate) {
  io::ByteWriter w;
  const std::uint32_t data_bytes = std::uint32_t(samples.size() * 2);
  w.bytes("RIFF");
  w.u32(36 + data_bytes);
  w.bytes("WAVE");
  w.bytes("fmt ");
  w.u32(16);
  w.u16(1);
  w.u16(1);
  w.u32(std::uint32_t(sample_rate));
  w.u32(std::uint32_t(sample_rate * 2));
  w.u16(2);
  w.u16(16);
  w.bytes("data");
  w.u32(data_bytes);
  for (double s : samples) {
    const double c = std::max(-1.0, std::min(1.0, s));
    w.u16(std::uint16_t(std::int16_t(std::min(32767L, std::lround(c * 32768.0)))));
  }
  return std::move(w.data());
}

inline void write_wav(const std::filesystem::path& path, std::span<const double> samples, int sample_rate) {
  io::write_file_atomic(path, encode_wav(samples, sample_rate));
}

}  // namespace pxfer::features
