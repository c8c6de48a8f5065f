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

#include "stopburst/manifest.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "stopburst/error.hpp"
#include "stopburst/text_util.hpp"

namespace stopburst::dataset {

void Manifest::validate() const {
  std::unordered_set<std::string> seen;
  seen.reserve(records.size());
  for (const auto& r : records) {
    stopburst::validate(r);
    if (!seen.insert(r.token_id).second) {
      throw ValidationError("duplicate token_id '" + r.token_id + "' in manifest");
    }
  }
}

std::unordered_map<std::string, std::size_t> Manifest::index() const {
  std::unordered_map<std::string, std::size_t> idx;
  idx.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) idx.emplace(records[i].token_id, i);
  return idx;
}

nlohmann::ordered_json token_to_json(const StopToken& t) {
  nlohmann::ordered_json j;
  j["token_id"] = t.token_id;
  j["corpus"] = t.corpus;
  j["speaker"] = t.speaker;
  j["audio_path"] = t.audio_path;
  j["phone"] = t.phone;
  j["voicing"] = to_string(t.voicing);
  j["start"] = t.start;
  j["end"] = t.end;
  j["burst"] = to_string(t.burst);
  j["label_source"] = to_string(t.label_source);
  j["confidence"] = t.confidence ? nlohmann::ordered_json(*t.confidence) : nlohmann::ordered_json(nullptr);
  if (t.excluded) j["excluded"] = true;
  if (t.clamped) j["clamped"] = true;
  return j;
}

StopToken token_from_json(const nlohmann::json& j) {
  try {
    StopToken t;
    t.token_id = j.at("token_id").get<std::string>();
    t.corpus = j.at("corpus").get<std::string>();
    t.speaker = j.at("speaker").get<std::string>();
    t.audio_path = j.at("audio_path").get<std::string>();
    t.phone = j.at("phone").get<std::string>();
    t.voicing = parse_voicing(j.at("voicing").get<std::string>());
    t.start = j.at("start").get<double>();
    t.end = j.at("end").get<double>();
    t.burst = parse_burst(j.at("burst").get<std::string>());
    t.label_source = parse_label_source(j.at("label_source").get<std::string>());
    if (auto it = j.find("confidence"); it != j.end() && !it->is_null()) t.confidence = it->get<double>();
    if (auto it = j.find("excluded"); it != j.end()) t.excluded = it->get<bool>();
    if (auto it = j.find("clamped"); it != j.end()) t.clamped = it->get<bool>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed token record: ") + e.what());
  }
}

std::string serialize_manifest(const Manifest& manifest) {
  std::string out;
  nlohmann::ordered_json header;
  header["schema_version"] = manifest.schema_version;
  header["provenance"] = manifest.provenance;
  out += header.dump();
  out += '\n';
  for (const auto& r : manifest.records) {
    out += token_to_json(r).dump();
    out += '\n';
  }
  return out;
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  bool have_header = false;
  int line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!j.is_object()) throw ParseError("expected a JSON object", line_no);
    if (!have_header && j.contains("schema_version")) {
      m.schema_version = j["schema_version"].get<int>();
      if (m.schema_version != kSchemaVersion) {
        throw ParseError("unsupported manifest schema_version " + std::to_string(m.schema_version), line_no);
      }
      m.provenance = j.value("provenance", "");
      have_header = true;
      continue;
    }
    try {
      m.records.push_back(token_from_json(j));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    Manifest m = parse_manifest(buffer.str());
    m.validate();
    return m;
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e);
  }
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  manifest.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_manifest(manifest);
}

}  // namespace stopburst::dataset
