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

#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "pxfer/errors.hpp"
#include "pxfer/io.hpp"
#include "pxfer/json_util.hpp"
#include "pxfer/nn/adam.hpp"
#include "pxfer/nn/tape.hpp"

namespace pxfer::train {

inline constexpr char kCheckpointMagic[] = "CCKP";
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2 };

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = uInt(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return std::uint32_t(crc);
}

// Named arrays in insertion order. Byte blobs (dtype u8, rank 1) carry JSON
// metadata.
class Checkpoint {
 public:
  using Value = std::variant<nn::Array<float>, nn::Array<double>, std::string>;

  void put(const std::string& name, Value v) {
    if (name.empty() || name.size() > 0xFFFF) throw InvalidInput("checkpoint entry name length out of range");
    auto it = index_.find(name);
    if (it != index_.end()) {
      entries_[it->second].second = std::move(v);
      return;
    }
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(v));
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const nn::Array<float>& f32(const std::string& name) const { return get<nn::Array<float>>(name, "f32"); }
  const nn::Array<double>& f64(const std::string& name) const { return get<nn::Array<double>>(name, "f64"); }
  const std::string& blob(const std::string& name) const { return get<std::string>(name, "u8"); }

  json meta() const { return json::parse(blob("meta")); }
  void set_meta(const json& j) { put("meta", j.dump()); }

  const std::vector<std::pair<std::string, Value>>& entries() const { return entries_; }

  std::vector<std::uint8_t> encode() const {
    io::ByteWriter w;
    w.bytes(std::string_view(kCheckpointMagic, 4));
    w.u16(kCheckpointVersion);
    w.u32(std::uint32_t(entries_.size()));
    for (const auto& [name, v] : entries_) {
      w.u16(std::uint16_t(name.size()));
      w.bytes(name);
      if (const auto* a = std::get_if<nn::Array<float>>(&v)) {
        header(w, DType::kF32, a->dims);
        for (float x : a->data) w.f32(x);
      } else if (const auto* d = std::get_if<nn::Array<double>>(&v)) {
        header(w, DType::kF64, d->dims);
        for (double x : d->data) w.f64(x);
      } else {
        const auto& s = std::get<std::string>(v);
        header(w, DType::kU8, {s.size()});
        w.bytes(s);
      }
    }
    w.u32(crc32_of(w.data().data(), w.data().size()));
    return std::move(w.data());
  }

  static Checkpoint decode(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    if (bytes.size() < 14) throw FormatError(what + ": truncated checkpoint");
    if (std::string(bytes.begin(), bytes.begin() + 4) != std::string(kCheckpointMagic, 4))
      throw FormatError(what + ": bad magic, not a checkpoint");
    const std::size_t body = bytes.size() - 4;
    io::ByteReader tail(bytes.data() + body, 4, what);
    if (tail.u32() != crc32_of(bytes.data(), body)) throw FormatError(what + ": checksum mismatch");
    io::ByteReader r(bytes.data(), body, what);
    r.bytes(4);
    const auto version = r.u16();
    if (version != kCheckpointVersion)
      throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::string name = r.bytes(r.u16());
      const auto dtype = r.u8();
      const auto rank = r.u8();
      nn::Dims dims(rank);
      for (auto& d : dims) d = std::size_t(r.u64());
      const std::size_t count = nn::numel(dims);
      const std::size_t width = dtype == 0 ? 4 : dtype == 1 ? 8 : 1;
      if (dtype > 2) throw FormatError(what + ": unknown dtype " + std::to_string(dtype) + " for " + name);
      if (count > r.remaining() / width) throw FormatError(what + ": truncated entry " + name);
      if (c.has(name)) throw FormatError(what + ": duplicate entry " + name);
      if (dtype == 0) {
        nn::Array<float> a(dims);
        for (auto& x : a.data) x = r.f32();
        c.put(name, std::move(a));
      } else if (dtype == 1) {
        nn::Array<double> a(dims);
        for (auto& x : a.data) x = r.f64();
        c.put(name, std::move(a));
      } else {
        if (rank != 1) throw FormatError(what + ": byte entry " + name + " must be rank 1");
        c.put(name, r.bytes(count));
      }
    }
    if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after entries");
    return c;
  }

  void save(const std::filesystem::path& path) const { io::write_file_atomic(path, encode()); }

  static Checkpoint load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
    return decode(io::read_file(path), path.string());
  }

 private:
  static void header(io::ByteWriter& w, DType t, const nn::Dims& dims) {
    if (dims.size() > 255) throw InvalidInput("checkpoint array rank too large");
    w.u8(std::uint8_t(t));
    w.u8(std::uint8_t(dims.size()));
    for (auto d : dims) w.u64(d);
  }

  template <typename T>
  const T& get(const std::string& name, const char* type) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw FormatError("checkpoint has no entry '" + name + "'");
    const T* v = std::get_if<T>(&entries_[it->second].second);
    if (!v) throw FormatError("checkpoint entry '" + name + "' is not " + type);
    return *v;
  }

  std::vector<std::pair<std::string, Value>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Parameters are stored under their own names, which carry the owning
// model's prefix ("cls.", "phon.", "ref.", "dec.", "disc.").
inline void store_params(Checkpoint& c, const nn::ParameterSet<float>& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) c.put(ps[i].name, ps[i].value);
}

// Every parameter must be present with its exact shape, and the checkpoint
// must hold no other parameters under any of the model's prefixes.
inline void restore_params(const Checkpoint& c, nn::ParameterSet<float>& ps,
                           const std::vector<std::string>& prefixes) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    if (!c.has(p.name)) throw FormatError("checkpoint is missing parameter '" + p.name + "'");
    const auto& a = c.f32(p.name);
    if (a.dims != p.value.dims)
      throw FormatError("parameter '" + p.name + "' has shape " + nn::dims_str(a.dims) + " in checkpoint, model expects " +
                        nn::dims_str(p.value.dims));
    p.value = a;
    p.zero_grad();
  }
  for (const auto& [name, _] : c.entries())
    for (const auto& prefix : prefixes)
      if (name.rfind(prefix, 0) == 0 && !ps.find(name))
        throw FormatError("checkpoint parameter '" + name + "' does not exist in the model");
}

inline void store_optimizer(Checkpoint& c, const nn::Adam<float>& opt, const std::string& prefix) {
  std::map<std::string, nn::Array<float>> state;
  opt.export_state(prefix, state);
  for (auto& [k, v] : state) c.put(k, std::move(v));
}

inline void restore_optimizer(const Checkpoint& c, nn::Adam<float>& opt, const std::string& prefix) {
  std::map<std::string, nn::Array<float>> state;
  for (const auto& [name, v] : c.entries())
    if (name.rfind(prefix + ".", 0) == 0) state[name] = c.f32(name);
  opt.import_state(prefix, state);
}

}  // namespace pxfer::train
