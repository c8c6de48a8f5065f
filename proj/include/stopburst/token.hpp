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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace stopburst {

enum class Voicing { voiced, voiceless };
enum class Burst { present, absent, unknown };
enum class LabelSource { manual, model, corpus };

std::string_view to_string(Voicing v) noexcept;
std::string_view to_string(Burst b) noexcept;
std::string_view to_string(LabelSource s) noexcept;

// Throw ValidationError on an unrecognized name.
Voicing parse_voicing(std::string_view s);
Burst parse_burst(std::string_view s);
LabelSource parse_label_source(std::string_view s);

// One stop event. Times are seconds on the source recording; start is the
// closure onset when a closure is annotated, end is the phone offset.
struct StopToken {
  std::string token_id;
  std::string corpus;
  std::string speaker;
  std::string audio_path;
  std::string phone;
  Voicing voicing = Voicing::voiceless;
  double start = 0.0;
  double end = 0.0;
  Burst burst = Burst::unknown;
  LabelSource label_source = LabelSource::corpus;
  // P(burst = present); set exactly when label_source == model.
  std::optional<double> confidence;

  // Pass-through flags. excluded marks tokens a corpus tool flagged for
  // removal (e.g. adjacency to a devoiced vowel); clamped marks tokens whose
  // context window ran past the recording edge at extraction time.
  bool excluded = false;
  bool clamped = false;

  double duration() const noexcept { return end - start; }
  bool labeled() const noexcept { return burst != Burst::unknown; }

  friend bool operator==(const StopToken&, const StopToken&) = default;
};

// Throws ValidationError naming the token when an invariant does not hold.
void validate(const StopToken& token);

// Phone label -> phonological voicing. Doubles as the stop inventory.
class VoicingMap {
 public:
  // {b, d, g, U+0261} voiced, {p, t, k} voiceless.
  static VoicingMap defaults();

  // One "phone = voiced|voiceless" entry per line; '#' starts a comment.
  static VoicingMap load(const std::filesystem::path& path);
  static VoicingMap parse(std::string_view text);

  void set(std::string phone, Voicing voicing) { map_[std::move(phone)] = voicing; }
  std::optional<Voicing> lookup(std::string_view phone) const;
  bool contains(std::string_view phone) const { return lookup(phone).has_value(); }
  std::set<std::string> inventory() const;
  bool empty() const noexcept { return map_.empty(); }

 private:
  std::map<std::string, Voicing, std::less<>> map_;
};

}  // namespace stopburst
