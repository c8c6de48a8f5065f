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

#include "stopburst/corpus.hpp"

#include <algorithm>

#include "stopburst/error.hpp"
#include "stopburst/text_util.hpp"

namespace stopburst::corpus {

std::optional<std::string> fused_closure_phone(std::string_view label, std::string_view closure_marker) {
  auto comma = label.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  if (trim(label.substr(0, comma)) != closure_marker) return std::nullopt;
  std::string_view phone = trim(label.substr(comma + 1));
  if (phone.empty()) return std::nullopt;
  return std::string(phone);
}

Extraction extract_stop_events(const textgrid::TextGrid& grid, const ExtractOptions& options) {
  const textgrid::IntervalTier* tier = grid.find_tier(options.tier_name);
  if (tier == nullptr) throw NotFound("no tier named '" + options.tier_name + "'");
  std::set<std::string> inventory = options.stop_inventory.value_or(options.voicing.inventory());
  if (inventory.empty()) throw ValidationError("stop inventory is empty");
  for (const auto& phone : inventory) {
    if (!options.voicing.contains(phone)) {
      throw ValidationError("stop phone '" + phone + "' has no voicing entry");
    }
  }
  auto is_stop = [&](std::string_view label) { return inventory.count(std::string(label)) > 0; };

  Extraction out;
  const auto& ivs = tier->intervals;
  auto make_token = [&](std::size_t phone_index, const std::string& phone, double start, double end,
                        Burst burst) {
    StopToken t;
    t.token_id = options.id_prefix + ":" + std::to_string(phone_index + 1);
    t.corpus = options.corpus;
    t.speaker = options.speaker;
    t.audio_path = options.audio_path;
    t.phone = phone;
    t.voicing = *options.voicing.lookup(phone);
    t.start = start;
    t.end = end;
    t.burst = burst;
    t.label_source = LabelSource::corpus;
    out.tokens.push_back(std::move(t));
  };

  for (std::size_t i = 0; i < ivs.size(); ++i) {
    std::string_view label = trim(ivs[i].text);
    if (label == options.closure_marker) {
      if (i + 1 == ivs.size()) {
        out.warnings.push_back({WarningKind::dangling_closure, i, ivs[i].xmin,
                                "closure mark at the end of tier '" + tier->name + "'"});
        continue;
      }
      std::string_view next = trim(ivs[i + 1].text);
      if (is_stop(next)) {
        make_token(i + 1, std::string(next), ivs[i].xmin, ivs[i + 1].xmax, Burst::present);
        ++i;
      } else {
        out.warnings.push_back({WarningKind::orphan_closure, i, ivs[i].xmin,
                                "closure mark followed by '" + std::string(next) + "', not a stop"});
      }
      continue;
    }
    if (auto phone = fused_closure_phone(label, options.closure_marker); phone && is_stop(*phone)) {
      make_token(i, *phone, ivs[i].xmin, ivs[i].xmax, Burst::absent);
      continue;
    }
    if (is_stop(label)) make_token(i, std::string(label), ivs[i].xmin, ivs[i].xmax, Burst::unknown);
  }
  return out;
}

textgrid::TextGrid emit_annotated_textgrid(const textgrid::TextGrid& grid,
                                           const std::vector<StopToken>& tokens,
                                           const std::string& tier_name) {
  constexpr double tol = textgrid::kBoundaryTolerance;
  std::vector<const StopToken*> sorted;
  sorted.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (!(t.start < t.end)) throw ValidationError("token '" + t.token_id + "' has start >= end");
    if (t.start < grid.xmin - tol || t.end > grid.xmax + tol) {
      throw ValidationError("token '" + t.token_id + "' lies outside the TextGrid span");
    }
    sorted.push_back(&t);
  }
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const StopToken* a, const StopToken* b) { return a->start < b->start; });

  std::vector<std::string> collisions;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->start < sorted[i - 1]->end - tol) {
      collisions.push_back(sorted[i - 1]->token_id + " / " + sorted[i]->token_id);
    }
  }
  if (!collisions.empty()) {
    std::string msg = "overlapping tokens:";
    for (const auto& c : collisions) msg += " [" + c + "]";
    throw ValidationError(msg);
  }

  textgrid::IntervalTier tier;
  tier.name = tier_name;
  double cursor = grid.xmin;
  for (const StopToken* t : sorted) {
    double start = std::max(t->start, grid.xmin);
    double end = std::min(t->end, grid.xmax);
    if (start > cursor + tol) tier.intervals.push_back({cursor, start, ""});
    // Snap to the previous boundary so the tier stays exactly contiguous.
    if (std::abs(start - cursor) <= tol) start = cursor;
    tier.intervals.push_back({start, end, std::string(to_string(t->burst))});
    cursor = end;
  }
  if (cursor < grid.xmax - tol) {
    tier.intervals.push_back({cursor, grid.xmax, ""});
  } else if (!tier.intervals.empty()) {
    tier.intervals.back().xmax = grid.xmax;
  }

  textgrid::TextGrid result = grid;
  if (auto* existing = result.find_tier(tier_name)) {
    *existing = std::move(tier);
  } else {
    result.tiers.push_back(std::move(tier));
  }
  return result;
}

}  // namespace stopburst::corpus
