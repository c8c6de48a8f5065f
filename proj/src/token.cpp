// Copyright 2026 The stopburst Authors.
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

#include "stopburst/token.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "stopburst/error.hpp"
#include "stopburst/text_util.hpp"

namespace stopburst {

std::string_view to_string(Voicing v) noexcept {
  return v == Voicing::voiced ? "voiced" : "voiceless";
}

std::string_view to_string(Burst b) noexcept {
  switch (b) {
    case Burst::present: return "present";
    case Burst::absent: return "absent";
    case Burst::unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(LabelSource s) noexcept {
  switch (s) {
    case LabelSource::manual: return "manual";
    case LabelSource::model: return "model";
    case LabelSource::corpus: return "corpus";
  }
  return "corpus";
}

Voicing parse_voicing(std::string_view s) {
  if (s == "voiced") return Voicing::voiced;
  if (s == "voiceless") return Voicing::voiceless;
  throw ValidationError("unknown voicing '" + std::string(s) + "'");
}

Burst parse_burst(std::string_view s) {
  if (s == "present") return Burst::present;
  if (s == "absent") return Burst::absent;
  if (s == "unknown") return Burst::unknown;
  throw ValidationError("unknown burst label '" + std::string(s) + "'");
}

LabelSource parse_label_source(std::string_view s) {
  if (s == "manual") return LabelSource::manual;
  if (s == "model") return LabelSource::model;
  if (s == "corpus") return LabelSource::corpus;
  throw ValidationError("unknown label source '" + std::string(s) + "'");
}

void validate(const StopToken& token) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("token '" + token.token_id + "': " + what);
  };
  if (token.token_id.empty()) throw ValidationError("token with empty token_id");
  if (!std::isfinite(token.start) || !std::isfinite(token.end)) fail("non-finite time");
  if (!(token.start < token.end)) fail("start must precede end");
  bool is_model = token.label_source == LabelSource::model;
  if (is_model != token.confidence.has_value()) {
    fail("confidence must be present exactly when label_source is model");
  }
  if (token.confidence && !(*token.confidence >= 0.0 && *token.confidence <= 1.0)) {
    fail("confidence outside [0, 1]");
  }
}

VoicingMap VoicingMap::defaults() {
  VoicingMap m;
  for (const char* p : {"b", "d", "g", "ɡ"}) m.set(p, Voicing::voiced);
  for (const char* p : {"p", "t", "k"}) m.set(p, Voicing::voiceless);
  return m;
}

VoicingMap VoicingMap::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open voicing map " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

VoicingMap VoicingMap::parse(std::string_view text) {
  VoicingMap m;
  int line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'phone = voicing'", line_no);
    std::string_view phone = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    if (phone.empty()) throw ParseError("empty phone label", line_no);
    try {
      m.set(std::string(phone), parse_voicing(value));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (m.empty()) throw ValidationError("voicing map has no entries");
  return m;
}

std::optional<Voicing> VoicingMap::lookup(std::string_view phone) const {
  auto it = map_.find(phone);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

std::set<std::string> VoicingMap::inventory() const {
  std::set<std::string> out;
  for (const auto& [phone, v] : map_) out.insert(phone);
  return out;
}

}  // namespace stopburst
