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

#include "stopburst/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

#include "stopburst/audio.hpp"
#include "stopburst/error.hpp"
#include "stopburst/rng.hpp"
#include "stopburst/text_util.hpp"

namespace stopburst::service {
namespace {

constexpr std::size_t kRecordingCacheSize = 8;

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string url_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == ':') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

std::optional<Label> label_of(const StopToken& t) {
  if (t.label_source != LabelSource::manual) return std::nullopt;
  switch (t.burst) {
    case Burst::present: return Label::present;
    case Burst::absent: return Label::absent;
    case Burst::unknown: return Label::unsure;
  }
  return std::nullopt;
}

void bump(Counts& c, Label l, int delta) {
  auto add = [delta](std::size_t& v) { v = static_cast<std::size_t>(static_cast<long long>(v) + delta); };
  add(c.labeled);
  switch (l) {
    case Label::present: add(c.present); break;
    case Label::absent: add(c.absent); break;
    case Label::unsure: add(c.unsure); break;
  }
}

nlohmann::ordered_json counts_json(const Counts& c) {
  return {{"total", c.total},     {"labeled", c.labeled}, {"present", c.present}, {"absent", c.absent},
          {"unsure", c.unsure},   {"open", c.open},       {"unseen", c.unseen}};
}

}  // namespace

std::string_view to_string(QueueStrategy s) noexcept {
  switch (s) {
    case QueueStrategy::sequential: return "sequential";
    case QueueStrategy::random: return "random";
    case QueueStrategy::uncertainty: return "uncertainty";
  }
  return "sequential";
}

QueueStrategy parse_strategy(std::string_view s) {
  if (s == "sequential") return QueueStrategy::sequential;
  if (s == "random") return QueueStrategy::random;
  if (s == "uncertainty") return QueueStrategy::uncertainty;
  throw ValidationError("unknown queue strategy '" + std::string(s) + "' (sequential, random, uncertainty)");
}

std::string_view to_string(Label l) noexcept {
  switch (l) {
    case Label::present: return "present";
    case Label::absent: return "absent";
    case Label::unsure: return "unsure";
  }
  return "unsure";
}

Label parse_label(std::string_view s) {
  if (s == "present") return Label::present;
  if (s == "absent") return Label::absent;
  if (s == "unsure") return Label::unsure;
  throw ValidationError("unknown label '" + std::string(s) + "' (present, absent, unsure)");
}

nlohmann::ordered_json to_json(const AuditEntry& e) {
  nlohmann::ordered_json j;
  j["seq"] = e.seq;
  j["token_id"] = e.token_id;
  j["label"] = to_string(e.label);
  j["previous"] = e.previous ? nlohmann::ordered_json(to_string(*e.previous)) : nlohmann::ordered_json(nullptr);
  j["annotator"] = e.annotator;
  j["session_id"] = e.session_id;
  j["time"] = e.time;
  return j;
}

AuditEntry audit_entry_from_json(const nlohmann::json& j) {
  try {
    AuditEntry e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.token_id = j.at("token_id").get<std::string>();
    e.label = parse_label(j.at("label").get<std::string>());
    if (auto it = j.find("previous"); it != j.end() && !it->is_null()) e.previous = parse_label(it->get<std::string>());
    e.annotator = j.value("annotator", "");
    e.session_id = j.value("session_id", "");
    e.time = j.value("time", "");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed journal entry: ") + ex.what());
  }
}

nlohmann::ordered_json to_json(const dsp::Spectrogram& s) {
  nlohmann::ordered_json j;
  j["frames"] = s.frames;
  j["bins"] = s.bins;
  j["sample_rate"] = s.sample_rate;
  j["time_step"] = s.time_step;
  j["window"] = s.window;
  j["freq_step"] = s.freq_step;
  j["floor_db"] = s.floor_db;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t f = 0; f < s.frames; ++f) {
    rows.push_back(std::vector<double>(s.db.begin() + static_cast<std::ptrdiff_t>(f * s.bins),
                                       s.db.begin() + static_cast<std::ptrdiff_t>((f + 1) * s.bins)));
  }
  j["db"] = rows;
  return j;
}

// ---------------------------------------------------------------------------

AnnotationService::AnnotationService(ServiceOptions options) : options_(std::move(options)) {
  if (options_.journal_path.empty()) options_.journal_path = options_.manifest_path.string() + ".labels.jsonl";
  if (options_.audio_root.empty()) options_.audio_root = options_.manifest_path.parent_path();
  if (options_.compact_every < 1) throw ValidationError("compact_every must be at least 1");
  if (!(options_.context >= 0.0)) throw ValidationError("annotation context must be non-negative");
  manifest_ = dataset::read_manifest(options_.manifest_path);
  index_ = manifest_.index();
  labels_.resize(manifest_.records.size());
  for (std::size_t i = 0; i < manifest_.records.size(); ++i) {
    const auto& r = manifest_.records[i];
    if (r.excluded) continue;
    ++counts_.total;
    labels_[i] = label_of(r);
    if (labels_[i]) bump(counts_, *labels_[i], +1);
  }

  std::ifstream in(options_.journal_path, std::ios::binary);
  if (in) {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      AuditEntry e;
      try {
        e = audit_entry_from_json(nlohmann::json::parse(line));
      } catch (const std::exception& ex) {
        throw ParseError(options_.journal_path.string() + ": " + ex.what(), line_no);
      }
      auto it = index_.find(e.token_id);
      if (it == index_.end()) {
        throw ParseError(options_.journal_path.string() + ": token '" + e.token_id + "' not in the manifest", line_no);
      }
      if (labels_[it->second] != e.label) {
        apply(it->second, e.label);
        ++pending_writes_;
      }
      journal_.push_back(std::move(e));
    }
  }
  counts_.unseen = counts_.total - counts_.labeled;
  if (pending_writes_ > 0) write_manifest_locked();
}

AnnotationService::~AnnotationService() {
  try {
    std::lock_guard lock(mu_);
    if (pending_writes_ > 0) write_manifest_locked();
  } catch (...) {
    // The journal already holds every acknowledged label.
  }
}

std::size_t AnnotationService::index_of(const std::string& token_id) const {
  auto it = index_.find(token_id);
  if (it == index_.end()) throw NotFound("unknown token '" + token_id + "'");
  return it->second;
}

void AnnotationService::apply(std::size_t idx, Label label) {
  auto& r = manifest_.records[idx];
  if (!r.excluded) {
    if (labels_[idx]) bump(counts_, *labels_[idx], -1);
    bump(counts_, label, +1);
  }
  labels_[idx] = label;
  r.label_source = LabelSource::manual;
  r.confidence.reset();
  r.burst = label == Label::present ? Burst::present : label == Label::absent ? Burst::absent : Burst::unknown;
}

void AnnotationService::write_manifest_locked() {
  auto tmp = options_.manifest_path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << dataset::serialize_manifest(manifest_);
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, options_.manifest_path);
  pending_writes_ = 0;
}

void AnnotationService::append_journal(const AuditEntry& e) {
  std::string line = to_json(e).dump() + "\n";
  std::FILE* f = std::fopen(options_.journal_path.c_str(), "ab");
  if (!f) throw Error("cannot open label journal " + options_.journal_path.string());
  bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0 &&
            ::fsync(fileno(f)) == 0;
  ok = std::fclose(f) == 0 && ok;
  if (!ok) throw Error("failed writing label journal " + options_.journal_path.string());
}

std::string AnnotationService::open_session(QueueStrategy strategy, std::uint64_t seed, std::string annotator,
                                            std::optional<std::string> session_id) {
  std::lock_guard lock(mu_);
  std::string id;
  if (session_id) {
    if (session_id->empty()) throw ValidationError("empty session id");
    if (sessions_.count(*session_id)) throw Conflict("session '" + *session_id + "' already exists");
    id = *session_id;
  } else {
    do {
      id = "s" + std::to_string(next_session_++);
    } while (sessions_.count(id));
  }
  Session s;
  s.id = id;
  s.strategy = strategy;
  s.seed = seed;
  s.annotator = std::move(annotator);
  build_order(s);
  sessions_.emplace(id, std::move(s));
  return id;
}

bool AnnotationService::has_session(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  return sessions_.count(session_id) > 0;
}

const std::vector<double>& AnnotationService::uncertainty_scores() {
  if (scores_) return *scores_;
  const auto& recs = manifest_.records;
  std::vector<double> p(recs.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> need;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].excluded) continue;
    if (recs[i].confidence) {
      p[i] = *recs[i].confidence;
    } else {
      need.push_back(i);
    }
  }
  if (!need.empty()) {
    if (!options_.backend) {
      throw ValidationError("uncertainty ordering needs stored confidences or a classifier backend (" +
                            std::to_string(need.size()) + " tokens have no confidence)");
    }
    std::vector<audio::AudioClip> clips;
    for (auto i : need) clips.push_back(clip_for(recs[i]));
    auto probs = options_.backend->classify_batch(clips);
    for (std::size_t k = 0; k < need.size(); ++k) p[need[k]] = probs[k];
  }
  std::vector<double> score(recs.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (!std::isnan(p[i])) score[i] = std::abs(p[i] - 0.5);
  }
  scores_ = std::move(score);
  return *scores_;
}

void AnnotationService::build_order(Session& s) {
  s.order.clear();
  s.cursor = 0;
  for (std::size_t i = 0; i < manifest_.records.size(); ++i) {
    if (!manifest_.records[i].excluded) s.order.push_back(i);
  }
  switch (s.strategy) {
    case QueueStrategy::sequential: break;
    case QueueStrategy::random: {
      CounterRng rng(s.seed, "annotation_queue");
      rng.shuffle(s.order);
      break;
    }
    case QueueStrategy::uncertainty: {
      const auto& score = uncertainty_scores();
      std::stable_sort(s.order.begin(), s.order.end(),
                       [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
      break;
    }
  }
}

NextResult AnnotationService::next_token(const std::string& session_id, std::optional<QueueStrategy> strategy) {
  std::string token_id;
  {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) {
      if (session_id.empty()) throw ValidationError("empty session id");
      Session s;
      s.id = session_id;
      s.strategy = strategy.value_or(QueueStrategy::sequential);
      build_order(s);
      it = sessions_.emplace(session_id, std::move(s)).first;
    } else if (strategy && *strategy != it->second.strategy) {
      it->second.strategy = *strategy;
      build_order(it->second);
    }
    Session& s = it->second;
    while (s.cursor < s.order.size()) {
      std::size_t idx = s.order[s.cursor++];
      const auto& id = manifest_.records[idx].token_id;
      if (labels_[idx] || assigned_.count(id)) continue;
      assigned_.emplace(id, s.id);
      s.served.insert(id);
      ++counts_.open;
      --counts_.unseen;
      token_id = id;
      break;
    }
  }
  NextResult r;
  if (token_id.empty()) return r;
  r.empty = false;
  r.token = descriptor(token_id);
  return r;
}

SubmitResult AnnotationService::submit_label(const std::string& session_id, const std::string& token_id, Label label,
                                             const std::string& annotator) {
  std::lock_guard lock(mu_);
  auto sit = sessions_.find(session_id);
  if (sit == sessions_.end()) throw NotFound("unknown session '" + session_id + "'");
  std::size_t idx = index_of(token_id);
  Session& s = sit->second;
  if (!s.served.count(token_id)) {
    throw Conflict("token '" + token_id + "' was not served to session '" + session_id + "'");
  }
  SubmitResult r;
  r.previous = labels_[idx];
  if (labels_[idx] == label) return r;

  AuditEntry e;
  e.seq = journal_.size() + 1;
  e.token_id = token_id;
  e.label = label;
  e.previous = labels_[idx];
  e.annotator = annotator.empty() ? s.annotator : annotator;
  e.session_id = session_id;
  e.time = utc_now();
  // Write-ahead: nothing changes unless the journal line is on disk.
  append_journal(e);

  bool first = !labels_[idx].has_value();
  apply(idx, label);
  if (assigned_.erase(token_id)) --counts_.open;
  if (first) ++s.labeled;
  journal_.push_back(e);
  r.changed = true;
  r.audit_seq = e.seq;
  if (++pending_writes_ >= options_.compact_every) write_manifest_locked();
  return r;
}

std::filesystem::path AnnotationService::resolve_audio(const StopToken& t) const {
  std::filesystem::path p(t.audio_path);
  return p.is_absolute() ? p : options_.audio_root / p;
}

std::shared_ptr<const audio::AudioClip> AnnotationService::recording(const std::filesystem::path& p) const {
  const std::string key = p.string();
  {
    std::lock_guard lock(cache_mu_);
    for (auto it = cache_.begin(); it != cache_.end(); ++it) {
      if (it->first == key) {
        cache_.splice(cache_.begin(), cache_, it);
        return cache_.front().second;
      }
    }
  }
  if (!std::filesystem::exists(p)) throw NotFound("audio file " + key + " is missing");
  auto clip = std::make_shared<const audio::AudioClip>(audio::resample(audio::read_wav(p), audio::kCanonicalRate));
  std::lock_guard lock(cache_mu_);
  cache_.emplace_front(key, clip);
  if (cache_.size() > kRecordingCacheSize) cache_.pop_back();
  return clip;
}

nlohmann::ordered_json AnnotationService::descriptor(const std::string& token_id) const {
  StopToken t;
  std::optional<Label> label;
  {
    std::lock_guard lock(mu_);
    std::size_t idx = index_of(token_id);
    t = manifest_.records[idx];
    label = labels_[idx];
  }
  nlohmann::ordered_json j;
  j["token_id"] = t.token_id;
  j["corpus"] = t.corpus;
  j["speaker"] = t.speaker;
  j["phone"] = t.phone;
  j["voicing"] = to_string(t.voicing);
  j["start"] = t.start;
  j["end"] = t.end;
  j["duration"] = t.duration();
  j["burst"] = to_string(t.burst);
  j["label_source"] = to_string(t.label_source);
  j["confidence"] = t.confidence ? nlohmann::ordered_json(*t.confidence) : nlohmann::ordered_json(nullptr);
  j["label"] = label ? nlohmann::ordered_json(to_string(*label)) : nlohmann::ordered_json(nullptr);
  std::string base = "/v1/tokens/" + url_encode(t.token_id);
  j["audio_url"] = base + "/audio";
  j["spectrogram_url"] = base + "/spectrogram";
  // Span the served clip covers, so the UI can shade the context.
  nlohmann::ordered_json span = nullptr;
  try {
    auto rec = recording(resolve_audio(t));
    auto b = audio::clip_bounds(rec->samples.size(), rec->sample_rate, t.start, t.end, options_.context);
    double rate = rec->sample_rate;
    span = {{"start", b.first / rate},
            {"end", b.last / rate},
            {"context", options_.context},
            {"token_offset", t.start - b.first / rate},
            {"clamped_start", b.clamped_start},
            {"clamped_end", b.clamped_end}};
  } catch (const Error&) {
    // Missing audio shows up as a 404 on the media endpoints.
  }
  j["clip"] = span;
  return j;
}

audio::AudioClip AnnotationService::clip(const std::string& token_id) const {
  StopToken t;
  {
    std::lock_guard lock(mu_);
    t = manifest_.records[index_of(token_id)];
  }
  return clip_for(t);
}

audio::AudioClip AnnotationService::clip_for(const StopToken& t) const {
  auto rec = recording(resolve_audio(t));
  return audio::extract_clip(*rec, t.start, t.end, options_.context).clip;
}

std::vector<std::uint8_t> AnnotationService::audio_wav(const std::string& token_id) const {
  return audio::encode_wav(clip(token_id));
}

dsp::Spectrogram AnnotationService::spectrogram(const std::string& token_id) const {
  return dsp::spectrogram(clip(token_id), options_.spectrogram);
}

Counts AnnotationService::counts() const {
  std::lock_guard lock(mu_);
  return counts_;
}

nlohmann::ordered_json AnnotationService::progress(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFound("unknown session '" + session_id + "'");
  const Session& s = it->second;
  std::size_t open = 0;
  for (const auto& [tok, sess] : assigned_) open += sess == s.id ? 1 : 0;
  nlohmann::ordered_json j = counts_json(counts_);
  j["session"] = {{"session_id", s.id},
                  {"strategy", to_string(s.strategy)},
                  {"annotator", s.annotator},
                  {"served", s.served.size()},
                  {"labeled", s.labeled},
                  {"open", open}};
  return j;
}

nlohmann::ordered_json AnnotationService::audit() const {
  std::lock_guard lock(mu_);
  Counts recount;
  for (const auto& r : manifest_.records) {
    if (r.excluded) continue;
    ++recount.total;
    if (auto l = label_of(r)) bump(recount, *l, +1);
  }
  bool disjoint = true;
  for (const auto& [tok, sess] : assigned_) {
    if (labels_[index_.at(tok)]) disjoint = false;
  }
  recount.open = assigned_.size();
  recount.unseen = recount.total - recount.labeled - recount.open;
  nlohmann::ordered_json j;
  j["consistent"] = recount == counts_ && disjoint;
  j["assignments_disjoint"] = disjoint;
  j["counters"] = counts_json(counts_);
  j["recount"] = counts_json(recount);
  j["journal_entries"] = journal_.size();
  return j;
}

std::vector<AuditEntry> AnnotationService::audit_log() const {
  std::lock_guard lock(mu_);
  return journal_;
}

dataset::Manifest AnnotationService::snapshot() const {
  std::lock_guard lock(mu_);
  return manifest_;
}

void AnnotationService::flush() {
  std::lock_guard lock(mu_);
  write_manifest_locked();
}

}  // namespace stopburst::service
