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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "stopburst/token.hpp"

namespace stopburst::dataset {

inline constexpr int kSchemaVersion = 1;

// An ordered collection of stop tokens plus where it came from. On disk it
// is JSON Lines: a header object {"schema_version", "provenance"} followed by
// one token object per line.
struct Manifest {
  std::vector<StopToken> records;
  std::string provenance;
  int schema_version = kSchemaVersion;

  // Throws ValidationError on duplicate ids or invalid tokens.
  void validate() const;

  // Index of token_id -> position in records.
  std::unordered_map<std::string, std::size_t> index() const;
};

nlohmann::ordered_json token_to_json(const StopToken& token);
// Throws ValidationError for missing/mistyped fields.
StopToken token_from_json(const nlohmann::json& j);

std::string serialize_manifest(const Manifest& manifest);
// Throws ParseError with the offending line number.
Manifest parse_manifest(std::string_view text);

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace stopburst::dataset
