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

#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stopburst/textgrid.hpp"
#include "stopburst/token.hpp"

namespace stopburst::corpus {

struct ExtractOptions {
  std::string tier_name = "phones";
  std::string closure_marker = "<cl>";
  VoicingMap voicing = VoicingMap::defaults();
  // Restricts extraction to these phones; defaults to every phone in the
  // voicing map. Each listed phone must have a voicing entry.
  std::optional<std::set<std::string>> stop_inventory;

  // Copied onto every token.
  std::string corpus;
  std::string speaker;
  std::string audio_path;
  // Token ids are "<id_prefix>:<1-based index of the stop's phone interval>".
  std::string id_prefix = "tok";
};

enum class WarningKind {
  dangling_closure,  // closure mark is the last interval of the tier
  orphan_closure,    // closure mark not followed by a stop phone
};

struct ExtractionWarning {
  WarningKind kind;
  std::size_t interval_index;  // 0-based
  double time;
  std::string message;
};

struct Extraction {
  std::vector<StopToken> tokens;
  std::vector<ExtractionWarning> warnings;
};

// Reads burst labels off the closure conventions of a phone tier:
//   "<cl>" followed by a stop phone  -> one token over both, burst present
//   "<cl>,g" (closure + phone fused) -> one token over the interval, burst absent
//   a stop phone with no closure     -> one token, burst unknown
// Labels are compared after trimming surrounding whitespace.
Extraction extract_stop_events(const textgrid::TextGrid& grid, const ExtractOptions& options);

// Splits a fused "<marker>,<phone>" label; nullopt when the label is not of
// that form for this marker.
std::optional<std::string> fused_closure_phone(std::string_view label, std::string_view closure_marker);

// Returns a copy of the grid with a tier (default "burst") holding one
// interval per token labeled with its burst value, gaps filled with empty
// intervals. An existing tier of the same name is replaced in place.
// Throws ValidationError for tokens outside the grid span or overlapping
// tokens (listing the colliding ids).
textgrid::TextGrid emit_annotated_textgrid(const textgrid::TextGrid& grid,
                                           const std::vector<StopToken>& tokens,
                                           const std::string& tier_name = "burst");

}  // namespace stopburst::corpus
