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
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pxfer/errors.hpp"
#include "pxfer/io.hpp"

namespace pxfer::features {

// Phoneme ids with their forced-alignment durations in frames.
struct PhonemeSequence {
  std::vector<int> ids;
  std::vector<int> durations;

  std::size_t total_frames() const {
    std::size_t n = 0;
    for (int d : durations) n += std::size_t(d);
    return n;
  }
  bool operator==(const PhonemeSequence&) const = default;
};

// One phoneme id per mel frame.
struct UpsampledPhonemes {
  std::vector<int> ids;
};

inline void validate(const PhonemeSequence& p, int inventory = 0) {
  if (p.ids.empty()) throw InvalidInput("phoneme sequence is empty");
  if (p.ids.size() != p.durations.size())
    throw InvalidInput("phoneme sequence has " + std::to_string(p.ids.size()) + " ids but " +
                       std::to_string(p.durations.size()) + " durations");
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    if (p.durations[i] < 1)
      throw InvalidInput("phoneme " + std::to_string(i) + " has non-positive duration " +
                         std::to_string(p.durations[i]));
    if (p.ids[i] < 0 || (inventory > 0 && p.ids[i] >= inventory))
      throw InvalidInput("phoneme id " + std::to_string(p.ids[i]) + " outside the inventory");
  }
}

// Repeats each id by its duration. With `expected_frames`, the total must match.
inline UpsampledPhonemes upsample_phonemes(const PhonemeSequence& p,
                                           std::optional<std::size_t> expected_frames = std::nullopt) {
  validate(p);
  if (expected_frames && p.total_frames() != *expected_frames)
    throw AlignmentError("durations sum to " + std::to_string(p.total_frames()) + " frames but the mel has " +
                         std::to_string(*expected_frames));
  UpsampledPhonemes up;
  up.ids.reserve(p.total_frames());
  for (std::size_t i = 0; i < p.ids.size(); ++i) up.ids.insert(up.ids.end(), std::size_t(p.durations[i]), p.ids[i]);
  return up;
}

// Inverse of upsampling for sequences without repeated adjacent phonemes.
inline PhonemeSequence run_length_encode(const UpsampledPhonemes& up) {
  PhonemeSequence p;
  for (int id : up.ids) {
    if (!p.ids.empty() && p.ids.back() == id) {
      ++p.durations.back();
    } else {
      p.ids.push_back(id);
      p.durations.push_back(1);
    }
  }
  return p;
}

// ---- duration (.dur) and phoneme (.phn) text files -------------------------------

inline std::string format_durations(const PhonemeSequence& p) {
  std::ostringstream os;
  for (std::size_t i = 0; i < p.ids.size(); ++i) os << p.ids[i] << ' ' << p.durations[i] << '\n';
  return os.str();
}

inline PhonemeSequence parse_durations(const std::string& text, const std::string& what = "duration file") {
  PhonemeSequence p;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ls(line);
    long id = 0, count = 0;
    std::string extra;
    if (!(ls >> id >> count) || (ls >> extra))
      throw FormatError(what + ":" + std::to_string(lineno) + ": expected '<phoneme_id> <frame_count>'");
    p.ids.push_back(int(id));
    p.durations.push_back(int(count));
  }
  if (p.ids.empty()) throw FormatError(what + ": no entries");
  return p;
}

inline void write_durations(const std::filesystem::path& path, const PhonemeSequence& p) {
  io::write_text(path, format_durations(p));
}

inline PhonemeSequence read_durations(const std::filesystem::path& path) {
  return parse_durations(io::read_text(path), path.string());
}

inline std::string format_phonemes(const std::vector<int>& ids) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? " " : "") << ids[i];
  os << '\n';
  return os.str();
}

inline std::vector<int> parse_phonemes(const std::string& text, const std::string& what = "phoneme file") {
  std::istringstream in(text);
  std::vector<int> ids;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw FormatError(what + ": bad phoneme id '" + tok + "'");
    }
  }
  return ids;
}

}  // namespace pxfer::features
