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

#include "stopburst/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "stopburst/analysis.hpp"
#include "stopburst/baseline.hpp"
#include "stopburst/classifier.hpp"
#include "stopburst/corpus.hpp"
#include "stopburst/dataset.hpp"
#include "stopburst/error.hpp"
#include "stopburst/eval.hpp"
#include "stopburst/manifest.hpp"
#include "stopburst/pipeline.hpp"
#include "stopburst/service.hpp"
#include "stopburst/textgrid.hpp"

#ifndef STOPBURST_VERSION
#define STOPBURST_VERSION "0.0.0"
#endif

namespace stopburst::cli {

std::string version() { return STOPBURST_VERSION; }

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr const char* kToolName = "stopburst";

// ---------------------------------------------------------------------------
// Option storage, one block per subcommand. Defaults here are the documented
// defaults; the resolved values land in every provenance file.

struct SynthCorpusArgs {
  std::string out;
  std::size_t recordings = 4;
  std::size_t stops = 50;
  double snr = 20.0;
  double unknown_frac = 0.1;
  double present_frac = 0.5;
};

struct ExtractArgs {
  std::string corpus_dir;
  std::string out;
  double context_ms = 10.0;
  std::string tier = "phones";
  std::string closure_marker = "<cl>";
  std::string voicing_map;
  std::vector<std::string> stops;
  std::string corpus_name;
};

struct SampleArgs {
  std::string in;
  std::string out;
  std::string mode;
  std::size_t n = 0;
  double frac = 0.05;
  std::size_t cap = 1000;
  std::size_t min_per_corpus = 0;
  std::string rest;
};

struct SplitArgs {
  std::string in;
  std::string train;
  std::string test;
  double train_frac = 0.8;
};

struct LadderArgs {
  std::string in;
  std::string out_dir;
  std::vector<std::size_t> sizes = dataset::kDefaultLadderSizes;
};

struct ServeArgs {
  std::string manifest;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  double context_ms = service::kDefaultAnnotationContext * 1000.0;
  std::string backend;
  int compact_every = 1;
  std::string journal;
  std::string audio_root;
};

struct TrainArgs {
  std::string train;
  std::string out;
  double l2 = 1e-3;
  double context_ms = 10.0;
  std::string audio_root;
};

struct PredictArgs {
  std::string in;
  std::string out;
  std::string backend;
  double context_ms = 10.0;
  std::string audio_root;
  std::size_t batch = 64;
};

struct EvalArgs {
  std::string pred;
  std::string gold;
  std::string out;
  std::string csv;
  int bootstrap = 2000;
  double level = 0.95;
  double threshold = 0.5;
  std::string model;
  std::optional<std::size_t> train_size;
};

struct AnalyzeArgs {
  std::vector<std::string> sources;
  std::string out_dir;
  int knots = 10;
  int curve_points = 50;
  int bins = 20;
  double level = 0.95;
  double threshold = 0.5;
};

struct ExportArgs {
  std::string manifest;
  std::string corpus_dir;
  std::string out_dir;
  std::string tier = "burst";
};

struct CurveArgs {
  std::string out;
  std::string json;
  std::vector<std::size_t> sizes = {50, 100, 500, 2000};
  std::size_t test_size = 1000;
  double snr = 20.0;
  double l2 = 1e-3;
  int bootstrap = 2000;
  double level = 0.95;
};

struct ReplayArgs {
  std::string provenance;
};

struct Invocation {
  std::vector<std::string> argv;  // as recorded in provenance
  std::ostream& out;
  std::ostream& err;
  const CLI::App& app;
  const CLI::App& sub;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Helpers

std::string shell_quote(const std::string& s) {
  if (!s.empty() && s.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_=./:,+@") ==
                        std::string::npos) {
    return s;
  }
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

std::string command_line(const std::vector<std::string>& argv) {
  std::string s = kToolName;
  for (const auto& a : argv) s += " " + shell_quote(a);
  return s;
}

// The subcommand's resolved options as a config file section; feeding it back
// through --config reproduces the run.
std::string resolved_config(const Invocation& inv) {
  return "[" + inv.sub.get_name() + "]\n" + inv.app.get_config_formatter_base()->to_config(&inv.sub, true, false, "");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NotFound("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_provenance(const fs::path& path, const Invocation& inv) {
  ojson j;
  j["tool"] = kToolName;
  j["version"] = version();
  j["subcommand"] = inv.sub.get_name();
  j["argv"] = inv.argv;
  j["seed"] = inv.seed;
  j["config"] = resolved_config(inv);
  write_text(path, j.dump(2) + "\n");
}

fs::path provenance_beside(const fs::path& output) { return fs::path(output.string() + ".provenance.json"); }

fs::path dir_of(const fs::path& file) { return fs::absolute(file).parent_path(); }

dataset::Manifest load_manifest(const fs::path& path) {
  try {
    return dataset::read_manifest(path);
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e);
  }
}

// Writes a manifest whose audio paths were relative to from_dir, rebased
// onto the output's directory, plus its provenance file.
void write_manifest_output(const fs::path& path, dataset::Manifest m, const fs::path& from_dir,
                           const Invocation& inv) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  m = pipeline::rebase_audio_paths(std::move(m), from_dir, dir_of(path));
  m.provenance = command_line(inv.argv) + " (seed " + std::to_string(inv.seed) + ")";
  dataset::write_manifest(path, m);
  write_provenance(provenance_beside(path), inv);
}

fs::path audio_root_or(const std::string& given, const fs::path& manifest) {
  return given.empty() ? dir_of(manifest) : fs::path(given);
}

double ms_to_seconds(double ms, const char* flag) {
  if (!std::isfinite(ms) || ms < 0) throw ValidationError(std::string(flag) + " must be finite and >= 0");
  return ms / 1000.0;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_synth_corpus(const SynthCorpusArgs& a, const Invocation& inv) {
  pipeline::SynthCorpusOptions o;
  o.recordings = a.recordings;
  o.stops_per_recording = a.stops;
  o.seed = inv.seed;
  o.snr_db = a.snr;
  o.unknown_fraction = a.unknown_frac;
  o.present_fraction = a.present_frac;
  auto recs = pipeline::write_synth_corpus(a.out, o);
  write_provenance(fs::path(a.out) / "provenance.json", inv);
  inv.out << "wrote " << recs.size() << " recordings x " << a.stops << " stops to " << a.out << "\n";
}

void cmd_extract(const ExtractArgs& a, const Invocation& inv) {
  corpus::ExtractOptions o;
  o.tier_name = a.tier;
  o.closure_marker = a.closure_marker;
  if (!a.voicing_map.empty()) o.voicing = VoicingMap::load(a.voicing_map);
  if (!a.stops.empty()) o.stop_inventory = std::set<std::string>(a.stops.begin(), a.stops.end());
  o.corpus = a.corpus_name;
  double context = ms_to_seconds(a.context_ms, "--context-ms");
  auto result = pipeline::extract_corpus(a.corpus_dir, o, context, dir_of(a.out));
  for (const auto& w : result.warnings) inv.err << "warning: " << w << "\n";
  std::size_t present = 0, absent = 0, unknown = 0, clamped = 0;
  for (const auto& t : result.manifest.records) {
    present += t.burst == Burst::present;
    absent += t.burst == Burst::absent;
    unknown += t.burst == Burst::unknown;
    clamped += t.clamped;
  }
  // Paths are already relative to the output directory.
  write_manifest_output(a.out, std::move(result.manifest), dir_of(a.out), inv);
  inv.out << "extracted " << present + absent + unknown << " tokens (present " << present << ", absent " << absent
          << ", unknown " << unknown << ", clamped " << clamped << ") -> " << a.out << "\n";
}

void cmd_sample(const SampleArgs& a, const Invocation& inv) {
  auto m = load_manifest(a.in);
  dataset::Manifest out;
  if (a.mode == "balanced") {
    if (a.n == 0) throw ValidationError("--n (tokens per voicing class) is required for balanced sampling");
    out = dataset::sample_balanced(m, a.n, inv.seed);
  } else if (a.mode == "annotation") {
    out = dataset::annotation_sample(m, a.frac, a.cap, inv.seed);
  } else {
    if (a.n == 0) throw ValidationError("--n (validation size) is required for validation sampling");
    auto [validation, rest] = dataset::stratified_validation(m, a.n, a.min_per_corpus, inv.seed);
    out = std::move(validation);
    if (!a.rest.empty()) write_manifest_output(a.rest, std::move(rest), dir_of(a.in), inv);
  }
  std::size_t n = out.records.size();
  write_manifest_output(a.out, std::move(out), dir_of(a.in), inv);
  inv.out << "sampled " << n << " of " << m.records.size() << " tokens (" << a.mode << ") -> " << a.out << "\n";
}

void cmd_split(const SplitArgs& a, const Invocation& inv) {
  auto m = load_manifest(a.in);
  auto [train, test] = dataset::split_train_test(m, a.train_frac, inv.seed);
  std::size_t nt = train.records.size(), ne = test.records.size();
  write_manifest_output(a.train, std::move(train), dir_of(a.in), inv);
  write_manifest_output(a.test, std::move(test), dir_of(a.in), inv);
  inv.out << "train " << nt << " -> " << a.train << ", test " << ne << " -> " << a.test << "\n";
}

void cmd_ladder(const LadderArgs& a, const Invocation& inv) {
  auto m = load_manifest(a.in);
  auto ladder = dataset::build_ladder(m, a.sizes, inv.seed);
  fs::path dir(a.out_dir);
  fs::create_directories(dir);
  ojson index;
  index["sizes"] = ladder.sizes;
  for (std::size_t size : ladder.sizes) {
    const auto& ids = ladder.subsets.at(size);
    std::string name = "train_" + std::to_string(size) + ".jsonl";
    auto subset = dataset::select(m, ids, "");
    write_manifest_output(dir / name, std::move(subset), dir_of(a.in), inv);
    index["subsets"][std::to_string(size)] = name;
    inv.out << "size " << size << " -> " << (dir / name).string() << "\n";
  }
  write_text(dir / "ladder.json", index.dump(2) + "\n");
  write_provenance(dir / "provenance.json", inv);
}

void cmd_serve(const ServeArgs& a, const Invocation& inv) {
  service::ServiceOptions o;
  o.manifest_path = a.manifest;
  if (!a.journal.empty()) o.journal_path = a.journal;
  if (!a.audio_root.empty()) o.audio_root = a.audio_root;
  o.context = ms_to_seconds(a.context_ms, "--context-ms");
  o.compact_every = a.compact_every;
  if (!a.backend.empty()) o.backend = std::shared_ptr<const ClassifierBackend>(open_backend(a.backend));

  // Route SIGINT/SIGTERM to a waiter thread so shutdown runs outside a
  // signal handler. The mask is set before any server thread exists.
  sigset_t set, old;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, &old);
  struct RestoreMask {
    sigset_t mask;
    ~RestoreMask() { pthread_sigmask(SIG_SETMASK, &mask, nullptr); }
  } restore{old};

  service::AnnotationService svc(o);
  std::optional<fs::path> static_dir;
  if (!a.static_dir.empty()) static_dir = fs::path(a.static_dir);
  service::HttpServer server(svc, static_dir);
  int port = server.bind(a.host, a.port);
  inv.out << "listening on http://" << a.host << ":" << port << "/v1" << std::endl;

  std::atomic<bool> signalled{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    signalled = true;
    server.stop();
  });
  server.listen();
  if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  // Drain any pending signal raised while shutting down.
  struct timespec zero {};
  while (sigtimedwait(&set, nullptr, &zero) > 0) {
  }
  svc.flush();
  inv.out << "stopped; manifest written to " << a.manifest << "\n";
}

void cmd_train_baseline(const TrainArgs& a, const Invocation& inv) {
  auto m = load_manifest(a.train);
  double context = ms_to_seconds(a.context_ms, "--context-ms");
  auto model = pipeline::train_baseline_from_manifest(m, audio_root_or(a.audio_root, a.train), context, a.l2, inv.seed);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  baseline::save_model(a.out, model);
  write_provenance(provenance_beside(a.out), inv);
  inv.out << "trained on " << model.metadata.n << " tokens, " << model.metadata.iterations << " iterations, loss "
          << fmt(model.metadata.final_loss, 6) << (model.metadata.converged ? "" : " (not converged)") << " -> "
          << a.out << "\n";
}

void cmd_predict(const PredictArgs& a, const Invocation& inv) {
  auto backend = open_backend(a.backend);
  auto m = load_manifest(a.in);
  double context = ms_to_seconds(a.context_ms, "--context-ms");
  auto predicted = pipeline::predict_manifest(m, *backend, audio_root_or(a.audio_root, a.in), context, a.batch);
  std::size_t present = 0, n = 0;
  for (const auto& t : predicted.records) {
    if (t.excluded) continue;
    ++n;
    present += t.burst == Burst::present;
  }
  write_manifest_output(a.out, std::move(predicted), dir_of(a.in), inv);
  inv.out << "predicted " << n << " tokens with " << backend->name() << " (" << present << " present) -> " << a.out
          << "\n";
}

void cmd_eval(const EvalArgs& a, const Invocation& inv) {
  auto gold = load_manifest(a.gold);
  auto pred = load_manifest(a.pred);
  auto items = eval::join_predictions(gold, pred, a.threshold);
  eval::BcaOptions o;
  o.level = a.level;
  o.replicates = a.bootstrap;
  o.seed = inv.seed;
  std::string model = a.model.empty() ? fs::path(a.pred).stem().string() : a.model;
  auto report = eval::evaluate(items, o, model, a.train_size);
  write_text(a.out, eval::to_json(report).dump(2) + "\n");
  write_provenance(provenance_beside(a.out), inv);
  if (!a.csv.empty()) {
    write_text(a.csv, std::string(eval::kCsvHeader) + "\n" + eval::to_csv_rows(report));
    write_provenance(provenance_beside(a.csv), inv);
  }
  inv.out << "n = " << report.n << ", " << static_cast<int>(std::lround(a.level * 100)) << "% BCa, B = "
          << a.bootstrap << "\n";
  for (const auto& mr : report.metrics) {
    inv.out << "  " << std::left << std::setw(11) << eval::to_string(mr.statistic) << " " << fmt(mr.interval.point)
            << "  [" << fmt(mr.interval.lo) << ", " << fmt(mr.interval.hi) << "]" << (mr.undefined ? "  undefined" : "")
            << "\n";
  }
}

void cmd_analyze(const AnalyzeArgs& a, const Invocation& inv) {
  std::vector<std::pair<std::string, dataset::Manifest>> sources;
  for (const auto& s : a.sources) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
      throw ValidationError("--source expects <annotation_type>=<manifest.jsonl>, got '" + s + "'");
    }
    sources.emplace_back(s.substr(0, eq), load_manifest(s.substr(eq + 1)));
  }
  auto rows = analysis::rows_from_manifests(sources, a.threshold);
  analysis::AnalysisOptions o;
  o.fit.K = a.knots;
  o.curve_points = a.curve_points;
  o.n_bins = a.bins;
  o.level = a.level;
  auto report = analysis::run_analysis(rows, o);
  fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_text(dir / "curves.csv", analysis::curves_csv(report));
  write_text(dir / "contrasts.csv", analysis::contrasts_csv(report));
  write_text(dir / "tests.csv", analysis::tests_csv(report));
  write_text(dir / "bins.csv", analysis::bins_csv(report));
  write_text(dir / "plot_bundle.json", analysis::plot_bundle(report).dump(2) + "\n");
  write_provenance(dir / "provenance.json", inv);
  inv.out << rows.size() << " rows; type smooths test chi2 = " << fmt(report.test.chi2) << ", df = " << report.test.df
          << ", p = " << report.test.p << "\n";
  for (const auto& c : report.contrasts) {
    inv.out << "  " << to_string(c.voicing) << " " << c.type_a << " - " << c.type_b << ": delta = " << fmt(c.delta)
            << ", p_adj = " << c.p_adjusted << "\n";
  }
  inv.out << "wrote plot data to " << dir.string() << "\n";
}

void cmd_export_textgrid(const ExportArgs& a, const Invocation& inv) {
  auto m = load_manifest(a.manifest);
  std::map<std::string, std::vector<StopToken>> by_stem;
  for (const auto& t : m.records) by_stem[fs::path(t.audio_path).stem().string()].push_back(t);
  std::vector<fs::path> grids;
  if (fs::is_directory(a.corpus_dir)) {
    for (const auto& e : fs::directory_iterator(a.corpus_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".TextGrid") grids.push_back(e.path());
    }
    std::sort(grids.begin(), grids.end());
  } else if (fs::exists(a.corpus_dir)) {
    grids.push_back(a.corpus_dir);
  } else {
    throw NotFound("no TextGrid file or directory at " + a.corpus_dir);
  }
  fs::path dir(a.out_dir);
  fs::create_directories(dir);
  std::size_t written = 0, tokens = 0;
  for (const auto& g : grids) {
    auto it = by_stem.find(g.stem().string());
    if (it == by_stem.end()) continue;
    auto grid = textgrid::read_textgrid(g);
    textgrid::write_textgrid(dir / g.filename(), corpus::emit_annotated_textgrid(grid, it->second, a.tier));
    tokens += it->second.size();
    by_stem.erase(it);
    ++written;
  }
  for (const auto& [stem, toks] : by_stem) {
    inv.err << "warning: no TextGrid for " << toks.size() << " tokens of recording '" << stem << "'\n";
  }
  write_provenance(dir / "provenance.json", inv);
  inv.out << "wrote " << written << " TextGrids with " << tokens << " tokens to " << dir.string() << "\n";
}

void cmd_curve(const CurveArgs& a, const Invocation& inv) {
  pipeline::SizeCurveOptions o;
  o.sizes = a.sizes;
  o.test_size = a.test_size;
  o.seed = inv.seed;
  o.snr_db = a.snr;
  o.l2 = a.l2;
  o.bootstrap.level = a.level;
  o.bootstrap.replicates = a.bootstrap;
  o.bootstrap.seed = inv.seed;
  auto reports = pipeline::baseline_size_curve(o);
  std::string csv = std::string(eval::kCsvHeader) + "\n";
  ojson all = ojson::array();
  for (const auto& r : reports) {
    csv += eval::to_csv_rows(r);
    all.push_back(eval::to_json(r));
    const auto& acc = r.at(eval::Statistic::accuracy).interval;
    inv.out << "size " << std::setw(6) << *r.train_size << "  accuracy " << fmt(acc.point) << "  [" << fmt(acc.lo)
            << ", " << fmt(acc.hi) << "]\n";
  }
  write_text(a.out, csv);
  write_provenance(provenance_beside(a.out), inv);
  if (!a.json.empty()) {
    write_text(a.json, all.dump(2) + "\n");
    write_provenance(provenance_beside(a.json), inv);
  }
}

int run_impl(const std::vector<std::string>& args, const std::vector<std::string>& recorded, std::ostream& out,
             std::ostream& err);

int cmd_replay(const ReplayArgs& a, std::ostream& out, std::ostream& err) {
  auto j = nlohmann::json::parse(read_text(a.provenance));
  if (j.value("tool", "") != kToolName) throw ValidationError(a.provenance + " is not a stopburst provenance file");
  std::string sub = j.at("subcommand").get<std::string>();
  if (sub == "replay" || sub == "serve") throw ValidationError("cannot replay '" + sub + "'");
  if (j.value("version", "") != version()) {
    err << "warning: recorded with version " << j.value("version", "?") << ", replaying with " << version() << "\n";
  }
  auto tmp = fs::temp_directory_path() /
             ("stopburst_replay_" + std::to_string(std::hash<std::string>{}(j.dump())) + ".toml");
  write_text(tmp, j.at("config").get<std::string>());
  std::vector<std::string> recorded = j.at("argv").get<std::vector<std::string>>();
  int rc = run_impl({"--config", tmp.string(), sub}, recorded, out, err);
  fs::remove(tmp);
  return rc;
}

int run_impl(const std::vector<std::string>& args, const std::vector<std::string>& recorded, std::ostream& out,
             std::ostream& err) {
  CLI::App app("Stop burst annotation, classification and analysis pipeline.", kToolName);
  app.set_version_flag("--version", version());
  app.set_config("--config", "", "TOML config file; [<subcommand>] sections set that subcommand's flags");
  app.require_subcommand(1);
  app.fallthrough(false);
  app.failure_message(CLI::FailureMessage::help);

  std::uint64_t seed = 0;
  auto add_seed = [&](CLI::App* s) {
    s->add_option("--seed", seed, "Seed for every random draw of this run")->capture_default_str();
  };

  SynthCorpusArgs synth_a;
  auto* synth_s = app.add_subcommand("synth-corpus", "Write a synthetic TextGrid + WAV corpus");
  synth_s->add_option("--out", synth_a.out, "Output directory")->required();
  synth_s->add_option("--recordings", synth_a.recordings)->capture_default_str()->check(CLI::PositiveNumber);
  synth_s->add_option("--stops", synth_a.stops, "Stops per recording")->capture_default_str()->check(CLI::PositiveNumber);
  synth_s->add_option("--snr", synth_a.snr, "Noise SNR in dB")->capture_default_str();
  synth_s->add_option("--unknown-frac", synth_a.unknown_frac, "Share of bare (unlabeled) stops")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  synth_s->add_option("--present-frac", synth_a.present_frac, "Share of labeled stops with a burst")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  add_seed(synth_s);

  ExtractArgs extract_a;
  auto* extract_s = app.add_subcommand("extract", "TextGrid + WAV corpus -> token manifest");
  extract_s->add_option("--corpus", extract_a.corpus_dir, "Directory of <stem>.TextGrid + <stem>.wav")->required();
  extract_s->add_option("--out", extract_a.out, "Output manifest (.jsonl)")->required();
  extract_s->add_option("--context-ms", extract_a.context_ms, "Context either side, for clamp flags")
      ->capture_default_str();
  extract_s->add_option("--tier", extract_a.tier, "Phone tier name")->capture_default_str();
  extract_s->add_option("--closure-marker", extract_a.closure_marker)->capture_default_str();
  extract_s->add_option("--voicing-map", extract_a.voicing_map, "phone = voiced|voiceless file");
  extract_s->add_option("--stops", extract_a.stops, "Restrict to these phones")->delimiter(',');
  extract_s->add_option("--corpus-name", extract_a.corpus_name, "Corpus field (default: directory name)");

  SampleArgs sample_a;
  auto* sample_s = app.add_subcommand("sample", "Balanced, annotation or validation sample of a manifest");
  sample_s->add_option("--in", sample_a.in)->required();
  sample_s->add_option("--out", sample_a.out)->required();
  sample_s->add_option("--mode", sample_a.mode)->required()->check(CLI::IsMember({"balanced", "annotation", "validation"}));
  sample_s->add_option("--n", sample_a.n, "balanced: tokens per voicing class; validation: total")->capture_default_str();
  sample_s->add_option("--frac", sample_a.frac, "annotation: share per (corpus, voicing) stratum")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  sample_s->add_option("--cap", sample_a.cap, "annotation: per-stratum cap")->capture_default_str();
  sample_s->add_option("--min-per-corpus", sample_a.min_per_corpus, "validation: per-corpus floor")->capture_default_str();
  sample_s->add_option("--rest", sample_a.rest, "validation: write the remainder here");
  add_seed(sample_s);

  SplitArgs split_a;
  auto* split_s = app.add_subcommand("split", "Voicing-stratified train/test split");
  split_s->add_option("--in", split_a.in)->required();
  split_s->add_option("--train", split_a.train)->required();
  split_s->add_option("--test", split_a.test)->required();
  split_s->add_option("--train-frac", split_a.train_frac)->capture_default_str();
  add_seed(split_s);

  LadderArgs ladder_a;
  auto* ladder_s = app.add_subcommand("ladder", "Nested training subsets");
  ladder_s->add_option("--in", ladder_a.in)->required();
  ladder_s->add_option("--out-dir", ladder_a.out_dir)->required();
  ladder_s->add_option("--sizes", ladder_a.sizes)->delimiter(',')->capture_default_str();
  add_seed(ladder_s);

  ServeArgs serve_a;
  auto* serve_s = app.add_subcommand("serve", "Annotation service (HTTP /v1 API)");
  serve_s->add_option("--manifest", serve_a.manifest)->required();
  serve_s->add_option("--host", serve_a.host)->capture_default_str();
  serve_s->add_option("--port", serve_a.port, "0 picks a free port")->capture_default_str()->check(CLI::Range(0, 65535));
  serve_s->add_option("--static-dir", serve_a.static_dir, "Annotation UI build to serve at /");
  serve_s->add_option("--context-ms", serve_a.context_ms, "Audio context served around a token")->capture_default_str();
  serve_s->add_option("--backend", serve_a.backend, "baseline:<model.json> or neural:<model.onnx>");
  serve_s->add_option("--compact-every", serve_a.compact_every, "Rewrite the manifest after this many labels")
      ->capture_default_str()->check(CLI::PositiveNumber);
  serve_s->add_option("--journal", serve_a.journal, "Label journal (default <manifest>.labels.jsonl)");
  serve_s->add_option("--audio-root", serve_a.audio_root, "Base for relative audio paths");

  TrainArgs train_a;
  auto* train_s = app.add_subcommand("train-baseline", "Fit the logistic-regression baseline");
  train_s->add_option("--train", train_a.train)->required();
  train_s->add_option("--out", train_a.out, "Model JSON")->required();
  train_s->add_option("--l2", train_a.l2)->capture_default_str();
  train_s->add_option("--context-ms", train_a.context_ms)->capture_default_str();
  train_s->add_option("--audio-root", train_a.audio_root);
  add_seed(train_s);

  PredictArgs predict_a;
  auto* predict_s = app.add_subcommand("predict", "Classify a manifest's tokens");
  predict_s->add_option("--in", predict_a.in)->required();
  predict_s->add_option("--out", predict_a.out)->required();
  predict_s->add_option("--backend", predict_a.backend, "baseline:<model.json> or neural:<model.onnx>")->required();
  predict_s->add_option("--context-ms", predict_a.context_ms)->capture_default_str();
  predict_s->add_option("--audio-root", predict_a.audio_root);
  predict_s->add_option("--batch", predict_a.batch)->capture_default_str()->check(CLI::PositiveNumber);

  EvalArgs eval_a;
  auto* eval_s = app.add_subcommand("eval", "Metrics with BCa bootstrap intervals");
  eval_s->add_option("--pred", eval_a.pred)->required();
  eval_s->add_option("--gold", eval_a.gold)->required();
  eval_s->add_option("--out", eval_a.out, "Report JSON")->required();
  eval_s->add_option("--csv", eval_a.csv, "Also write the report as CSV rows");
  eval_s->add_option("--bootstrap", eval_a.bootstrap, "Replicates")->capture_default_str();
  eval_s->add_option("--level", eval_a.level)->capture_default_str();
  eval_s->add_option("--threshold", eval_a.threshold)->capture_default_str();
  eval_s->add_option("--model", eval_a.model, "Model name in the report (default: prediction file stem)");
  eval_s->add_option("--train-size", eval_a.train_size);
  add_seed(eval_s);

  AnalyzeArgs analyze_a;
  auto* analyze_s = app.add_subcommand("analyze", "Smooth burst-rate curves, contrasts and model comparison");
  analyze_s->add_option("--source", analyze_a.sources, "<annotation_type>=<manifest.jsonl>, repeatable")
      ->required();
  analyze_s->add_option("--out-dir", analyze_a.out_dir)->required();
  analyze_s->add_option("--knots", analyze_a.knots, "B-spline basis size")->capture_default_str();
  analyze_s->add_option("--curve-points", analyze_a.curve_points)->capture_default_str();
  analyze_s->add_option("--bins", analyze_a.bins)->capture_default_str();
  analyze_s->add_option("--level", analyze_a.level)->capture_default_str();
  analyze_s->add_option("--threshold", analyze_a.threshold)->capture_default_str();

  ExportArgs export_a;
  auto* export_s = app.add_subcommand("export-textgrid", "Add a burst tier to TextGrids from a manifest");
  export_s->add_option("--manifest", export_a.manifest)->required();
  export_s->add_option("--corpus", export_a.corpus_dir, "TextGrid file or directory")->required();
  export_s->add_option("--out-dir", export_a.out_dir)->required();
  export_s->add_option("--tier", export_a.tier)->capture_default_str();

  CurveArgs curve_a;
  auto* curve_s = app.add_subcommand("curve", "Baseline accuracy vs training size on synthetic stops");
  curve_s->add_option("--out", curve_a.out, "CSV in the evaluation report schema")->required();
  curve_s->add_option("--json", curve_a.json, "Also write full reports");
  curve_s->add_option("--sizes", curve_a.sizes)->delimiter(',')->capture_default_str();
  curve_s->add_option("--test-size", curve_a.test_size)->capture_default_str();
  curve_s->add_option("--snr", curve_a.snr)->capture_default_str();
  curve_s->add_option("--l2", curve_a.l2)->capture_default_str();
  curve_s->add_option("--bootstrap", curve_a.bootstrap)->capture_default_str();
  curve_s->add_option("--level", curve_a.level)->capture_default_str();
  add_seed(curve_s);

  ReplayArgs replay_a;
  auto* replay_s = app.add_subcommand("replay", "Re-run a command from its provenance file");
  replay_s->add_option("provenance", replay_a.provenance)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  Invocation inv{recorded, out, err, app, *sub, seed};
  try {
    if (sub == synth_s) cmd_synth_corpus(synth_a, inv);
    else if (sub == extract_s) cmd_extract(extract_a, inv);
    else if (sub == sample_s) cmd_sample(sample_a, inv);
    else if (sub == split_s) cmd_split(split_a, inv);
    else if (sub == ladder_s) cmd_ladder(ladder_a, inv);
    else if (sub == serve_s) cmd_serve(serve_a, inv);
    else if (sub == train_s) cmd_train_baseline(train_a, inv);
    else if (sub == predict_s) cmd_predict(predict_a, inv);
    else if (sub == eval_s) cmd_eval(eval_a, inv);
    else if (sub == analyze_s) cmd_analyze(analyze_a, inv);
    else if (sub == export_s) cmd_export_textgrid(export_a, inv);
    else if (sub == curve_s) cmd_curve(curve_a, inv);
    else if (sub == replay_s) return cmd_replay(replay_a, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return run_impl(args, args, out, err);
}

}  // namespace stopburst::cli
