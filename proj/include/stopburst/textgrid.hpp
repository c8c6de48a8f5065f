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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace stopburst::textgrid {

// Times closer than this are treated as the same boundary when checking
// contiguity. Praat itself writes boundaries with full precision, so this
// only absorbs noise from tools that print fewer digits.
inline constexpr double kBoundaryTolerance = 1e-9;

struct Interval {
  double xmin = 0.0;
  double xmax = 0.0;
  std::string text;

  friend bool operator==(const Interval&, const Interval&) = default;
};

// A tier's span always equals its grid's span, so it is not stored twice.
struct IntervalTier {
  std::string name;
  std::vector<Interval> intervals;

  friend bool operator==(const IntervalTier&, const IntervalTier&) = default;
};

struct TextGrid {
  double xmin = 0.0;
  double xmax = 0.0;
  std::vector<IntervalTier> tiers;

  const IntervalTier* find_tier(std::string_view name) const;
  IntervalTier* find_tier(std::string_view name);

  friend bool operator==(const TextGrid&, const TextGrid&) = default;
};

// Converts raw file bytes to UTF-8: a UTF-8 or UTF-16 (LE/BE) byte order mark
// selects the encoding; without a BOM the bytes must already be valid UTF-8.
// Throws ParseError otherwise.
std::string decode_text(std::string_view bytes);

// Praat long text format only. Throws ParseError (with the 1-based line
// number) for malformed input, short/binary formats, count mismatches, and
// overlapping, gapped or out-of-order intervals.
TextGrid parse_textgrid(std::string_view bytes);
TextGrid read_textgrid(const std::filesystem::path& path);

// Throws ValidationError if the grid violates a structural invariant.
void validate(const TextGrid& grid);

// Praat long text format as written by "Save as text file" (UTF-8, LF).
// Validates first; nothing is produced for an invalid grid.
std::string serialize_textgrid(const TextGrid& grid);
void write_textgrid(const std::filesystem::path& path, const TextGrid& grid);

}  // namespace stopburst::textgrid
