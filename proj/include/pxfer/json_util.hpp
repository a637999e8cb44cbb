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

#include <nlohmann/json.hpp>

#include <set>
#include <string>

#include "pxfer/errors.hpp"
#include "pxfer/features/mel.hpp"

namespace pxfer {

using json = nlohmann::json;

// Reads known keys from a JSON object into defaults; any key not read is an
// error once finish() is called.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidConfig(where_ + ": expected a JSON object");
  }

  template <typename T>
  StrictObject& get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw InvalidConfig(where_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw InvalidConfig(where_ + ": unknown key '" + it.key() + "'");
  }

  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline json to_json(const features::MelConfig& c) {
  return json{{"sample_rate", c.sample_rate}, {"n_fft", c.n_fft}, {"hop", c.hop}, {"n_mels", c.n_mels},
              {"fmin", c.fmin},           {"fmax", c.fmax},   {"log_floor", c.log_floor}};
}

inline void from_json(const json& j, features::MelConfig& c, const std::string& where) {
  StrictObject o(j, where);
  o.get("sample_rate", c.sample_rate)
      .get("n_fft", c.n_fft)
      .get("hop", c.hop)
      .get("n_mels", c.n_mels)
      .get("fmin", c.fmin)
      .get("fmax", c.fmax)
      .get("log_floor", c.log_floor);
  o.finish();
  c.validate();
}

}  // namespace pxfer
