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
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "stopburst/classifier.hpp"
#include "stopburst/dsp.hpp"
#include "stopburst/manifest.hpp"

namespace stopburst::service {

enum class QueueStrategy { sequential, random, uncertainty };
std::string_view to_string(QueueStrategy s) noexcept;
QueueStrategy parse_strategy(std::string_view s);

enum class Label { present, absent, unsure };
std::string_view to_string(Label l) noexcept;
Label parse_label(std::string_view s);

// Annotation context around each served token. Training extraction uses its
// own (shorter) context.
inline constexpr double kDefaultAnnotationContext = 0.1;

struct ServiceOptions {
  std::filesystem::path manifest_path;
  // Write-ahead label journal; defaults to "<manifest>.labels.jsonl".
  std::filesystem::path journal_path;
  // Base for relative audio paths; defaults to the manifest's directory.
  std::filesystem::path audio_root;
  double context = kDefaultAnnotationContext;
  // Rewrite the manifest file after this many label changes (the journal is
  // always written first). 1 keeps the manifest file current after every ack.
  int compact_every = 1;
  // Used for uncertainty ordering of tokens without a stored confidence.
  std::shared_ptr<const ClassifierBackend> backend;
  dsp::SpectrogramOptions spectrogram;
};

// One journal line. Every label change is one entry; resubmitting the
// current label writes nothing.
struct AuditEntry {
  std::uint64_t seq = 0;
  std::string token_id;
  Label label = Label::present;
  std::optional<Label> previous;
  std::string annotator;
  std::string session_id;
  std::string time;  // UTC, ISO 8601
};

nlohmann::ordered_json to_json(const AuditEntry& e);
AuditEntry audit_entry_from_json(const nlohmann::json& j);

struct NextResult {
  bool empty = true;
  std::optional<nlohmann::ordered_json> token;  // descriptor
};

struct SubmitResult {
  bool changed = false;
  std::optional<Label> previous;
  std::optional<std::uint64_t> audit_seq;
};

struct Counts {
  std::size_t total = 0;      // non-excluded tokens
  std::size_t labeled = 0;    // manual labels of any kind
  std::size_t present = 0;
  std::size_t absent = 0;
  std::size_t unsure = 0;
  std::size_t open = 0;       // served, not yet labeled
  std::size_t unseen = 0;     // neither labeled nor assigned
  bool operator==(const Counts&) const = default;
};

// The annotation loop: prioritized queues per session, label persistence
// and media for the UI. All public members are thread-safe; queue pops and
// label writes happen under one lock, so no token is handed to two open
// assignments and writes to a token are serialized.
class AnnotationService {
 public:
  // Loads the manifest and replays the journal. Throws NotFound /
  // ParseError for unreadable inputs.
  explicit AnnotationService(ServiceOptions options);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  // Returns the session id; a given id that already exists is a Conflict.
  std::string open_session(QueueStrategy strategy, std::uint64_t seed, std::string annotator,
                           std::optional<std::string> session_id = std::nullopt);
  bool has_session(const std::string& session_id) const;

  // Next unlabeled, unassigned token in the session's order. A strategy
  // different from the session's switches the session to it. Unknown
  // sessions are created on first use with the given (or sequential)
  // strategy and seed 0.
  NextResult next_token(const std::string& session_id, std::optional<QueueStrategy> strategy = std::nullopt);

  // Throws NotFound for an unknown token or session, Conflict when the token
  // was never served to this session.
  SubmitResult submit_label(const std::string& session_id, const std::string& token_id, Label label,
                            const std::string& annotator);

  // Token metadata plus media URLs and the served clip span. NotFound for
  // unknown ids.
  nlohmann::ordered_json descriptor(const std::string& token_id) const;

  // Token with annotation context, 16 kHz. NotFound when the token or its
  // audio file is missing.
  audio::AudioClip clip(const std::string& token_id) const;
  std::vector<std::uint8_t> audio_wav(const std::string& token_id) const;
  dsp::Spectrogram spectrogram(const std::string& token_id) const;

  Counts counts() const;
  // counts() plus per-session served/labeled counters.
  nlohmann::ordered_json progress(const std::string& session_id) const;
  // Brute-force recount over the manifest compared with the running counters.
  nlohmann::ordered_json audit() const;

  std::vector<AuditEntry> audit_log() const;
  dataset::Manifest snapshot() const;
  // Rewrites the manifest file now.
  void flush();

  const ServiceOptions& options() const noexcept { return options_; }

 private:
  struct Session {
    std::string id;
    QueueStrategy strategy = QueueStrategy::sequential;
    std::uint64_t seed = 0;
    std::string annotator;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::set<std::string> served;
    std::size_t labeled = 0;
  };

  void build_order(Session& s);
  const std::vector<double>& uncertainty_scores();
  std::size_t index_of(const std::string& token_id) const;
  void apply(std::size_t idx, Label label);
  void write_manifest_locked();
  void append_journal(const AuditEntry& e);
  std::filesystem::path resolve_audio(const StopToken& t) const;
  // Does not take mu_.
  audio::AudioClip clip_for(const StopToken& t) const;
  std::shared_ptr<const audio::AudioClip> recording(const std::filesystem::path& p) const;

  ServiceOptions options_;
  mutable std::mutex mu_;
  dataset::Manifest manifest_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, Session> sessions_;
  std::unordered_map<std::string, std::string> assigned_;  // token -> session, open only
  std::vector<std::optional<Label>> labels_;               // per record
  std::vector<AuditEntry> journal_;
  std::optional<std::vector<double>> scores_;
  Counts counts_;
  int pending_writes_ = 0;
  std::uint64_t next_session_ = 1;

  mutable std::mutex cache_mu_;
  mutable std::list<std::pair<std::string, std::shared_ptr<const audio::AudioClip>>> cache_;
};

// Spectrogram as JSON: dims, axis scales and row-major dB values.
nlohmann::ordered_json to_json(const dsp::Spectrogram& s);

// HTTP front end under /v1, plus static files for the UI bundle.
//   POST /v1/sessions                       {strategy, seed, annotator, session_id?}
//   GET  /v1/sessions/{id}/next?strategy=
//   POST /v1/sessions/{id}/labels           {token_id, label, annotator}
//   GET  /v1/sessions/{id}/progress
//   GET  /v1/tokens/{id}
//   GET  /v1/tokens/{id}/audio              WAV, 16 kHz PCM16
//   GET  /v1/tokens/{id}/spectrogram
//   GET  /v1/audit, GET /v1/audit/log, POST /v1/flush, GET /v1/health
// Errors are JSON {error, message}: 400 validation, 404 not found,
// 409 conflict, 500 otherwise.
class HttpServer {
 public:
  HttpServer(AnnotationService& service, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws Error on
  // failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace stopburst::service
