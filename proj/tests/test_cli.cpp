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

#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "stopburst/audio.hpp"
#include "stopburst/baseline.hpp"
#include "stopburst/cli.hpp"
#include "stopburst/corpus.hpp"
#include "stopburst/dataset.hpp"
#include "stopburst/error.hpp"
#include "stopburst/eval.hpp"
#include "stopburst/pipeline.hpp"
#include "stopburst/textgrid.hpp"

// After the library headers: resolv.h (pulled in here) defines _res, which
// collides with Eigen's parameter names.
#include <arpa/inet.h>
#include <netinet/in.h>
#include <pthread.h>
#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include "httplib.h"

using namespace stopburst;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Every regular file under dir, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
  }
  return files;
}

// synth-corpus -> extract -> sample -> split -> train-baseline -> predict
// -> eval -> analyze, all under root.
void run_pipeline(const fs::path& root, const std::string& seed) {
  auto s = [&](const std::string& rel) { return (root / rel).string(); };
  auto ok = [](const Result& r) {
    INFO(r.err);
    REQUIRE(r.code == 0);
  };
  ok(run_cli({"synth-corpus", "--out", s("corpus"), "--recordings", "4", "--stops", "60", "--snr", "10", "--seed", seed}));
  ok(run_cli({"extract", "--corpus", s("corpus"), "--out", s("work/all.jsonl"), "--context-ms", "10"}));
  ok(run_cli({"sample", "--in", s("work/all.jsonl"), "--out", s("work/balanced.jsonl"), "--mode", "balanced", "--n", "60",
          "--seed", seed}));
  ok(run_cli({"split", "--in", s("work/balanced.jsonl"), "--train", s("work/train.jsonl"), "--test", s("work/test.jsonl"),
          "--train-frac", "0.6", "--seed", seed}));
  ok(run_cli({"train-baseline", "--train", s("work/train.jsonl"), "--out", s("model/baseline.json"), "--seed", seed}));
  ok(run_cli({"predict", "--in", s("work/test.jsonl"), "--out", s("pred/test.jsonl"), "--backend",
          "baseline:" + s("model/baseline.json")}));
  ok(run_cli({"predict", "--in", s("work/all.jsonl"), "--out", s("pred/all.jsonl"), "--backend",
          "baseline:" + s("model/baseline.json")}));
  ok(run_cli({"eval", "--pred", s("pred/test.jsonl"), "--gold", s("work/test.jsonl"), "--out", s("report/eval.json"),
          "--csv", s("report/eval.csv"), "--bootstrap", "2000", "--seed", seed}));
  ok(run_cli({"analyze", "--source", "manual=" + s("work/all.jsonl"), "--source", "baseline=" + s("pred/all.jsonl"),
          "--out-dir", s("report/analysis")}));
}

}  // namespace

TEST_CASE("end-to-end pipeline on the synthetic corpus is deterministic given the seed") {
  auto root = oracle::temp_dir("cli_e2e");
  auto t0 = std::chrono::steady_clock::now();
  run_pipeline(root, "7");
  auto first = snapshot(root);
  run_pipeline(root, "7");
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(seconds < 300.0);
  auto second = snapshot(root);
  REQUIRE(first.size() == second.size());
  for (const auto& [name, bytes] : first) {
    INFO(name);
    CHECK(second.at(name) == bytes);
  }
  for (const char* f : {"work/all.jsonl", "work/train.jsonl", "pred/test.jsonl", "model/baseline.json",
                        "report/eval.json", "report/eval.csv", "report/analysis/curves.csv",
                        "report/analysis/contrasts.csv", "report/analysis/tests.csv", "report/analysis/bins.csv",
                        "report/analysis/plot_bundle.json"}) {
    INFO(f);
    CHECK(first.count(f) == 1);
  }
  // Provenance beside every file output.
  for (const char* f : {"work/all.jsonl", "work/test.jsonl", "pred/test.jsonl", "model/baseline.json",
                        "report/eval.json", "report/eval.csv"}) {
    INFO(f);
    CHECK(first.count(std::string(f) + ".provenance.json") == 1);
  }
  CHECK(first.count("report/analysis/provenance.json") == 1);

  // The classifier is usable at 10 dB and the report is well formed.
  auto report = eval::report_from_json(nlohmann::json::parse(first.at("report/eval.json")));
  CHECK(report.n == 48);
  CHECK(report.at(eval::Statistic::accuracy).interval.point >= 0.8);
  CHECK(report.options.seed == 7);
  // Predicted audio paths still resolve from the output's directory.
  auto pred = dataset::read_manifest(root / "pred/test.jsonl");
  for (const auto& t : pred.records) CHECK(fs::exists(root / "pred" / t.audio_path));
}

TEST_CASE("a different seed changes the sampled tokens") {
  auto a = oracle::temp_dir("cli_seed_a");
  auto b = oracle::temp_dir("cli_seed_b");
  for (const auto& [dir, seed] : {std::pair{a, "1"}, std::pair{b, "2"}}) {
    REQUIRE(run_cli({"synth-corpus", "--out", (dir / "c").string(), "--recordings", "2", "--stops", "40"}).code == 0);
    REQUIRE(run_cli({"extract", "--corpus", (dir / "c").string(), "--out", (dir / "all.jsonl").string()}).code == 0);
    REQUIRE(run_cli({"sample", "--in", (dir / "all.jsonl").string(), "--out", (dir / "s.jsonl").string(), "--mode",
                 "balanced", "--n", "10", "--seed", seed})
                .code == 0);
  }
  auto ids = [](const fs::path& p) {
    std::set<std::string> out;
    for (const auto& t : dataset::read_manifest(p).records) out.insert(t.token_id);
    return out;
  };
  CHECK(ids(a / "all.jsonl") == ids(b / "all.jsonl"));
  CHECK(ids(a / "s.jsonl") != ids(b / "s.jsonl"));
}

TEST_CASE("exit codes: 0 success, 1 operational error, 2 usage error") {
  auto dir = oracle::temp_dir("cli_exit");
  CHECK(run_cli({"--help"}).code == 0);
  CHECK(run_cli({"eval", "--help"}).code == 0);
  CHECK(run_cli({"--version"}).code == 0);
  CHECK(run_cli({"--version"}).out.find(cli::version()) != std::string::npos);

  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"eval", "--pred", "p.jsonl"}).code == 2);  // --gold missing
  CHECK(run_cli({"sample", "--in", "a", "--out", "b", "--mode", "sideways"}).code == 2);
  CHECK(run_cli({"eval", "--pred", "p", "--gold", "g", "--out", "o", "--bootstrap", "many"}).code == 2);
  auto usage = run_cli({"eval", "--pred", "p.jsonl"});
  CHECK(usage.err.find("--gold") != std::string::npos);

  // Loading a model that does not exist is an operational error.
  REQUIRE(run_cli({"synth-corpus", "--out", (dir / "c").string(), "--recordings", "1", "--stops", "5"}).code == 0);
  REQUIRE(run_cli({"extract", "--corpus", (dir / "c").string(), "--out", (dir / "m.jsonl").string()}).code == 0);
  auto missing = run_cli({"predict", "--in", (dir / "m.jsonl").string(), "--out", (dir / "p.jsonl").string(),
                      "--backend", "neural:missing.onnx"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("missing.onnx") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "p.jsonl"));

  CHECK(run_cli({"eval", "--pred", (dir / "none.jsonl").string(), "--gold", (dir / "m.jsonl").string(), "--out",
             (dir / "r.json").string()})
            .code == 1);
  CHECK(run_cli({"extract", "--corpus", (dir / "nowhere").string(), "--out", (dir / "x.jsonl").string()}).code == 1);
  // Balanced sampling asking for more tokens than exist.
  CHECK(run_cli({"sample", "--in", (dir / "m.jsonl").string(), "--out", (dir / "s.jsonl").string(), "--mode", "balanced",
             "--n", "1000"})
            .code == 1);
}

TEST_CASE("eval run twice with the same flags writes byte-identical reports") {
  auto dir = oracle::temp_dir("cli_eval_twice");
  dataset::Manifest gold, pred;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 60; ++i) {
    StopToken t;
    t.token_id = "t" + std::to_string(i);
    t.corpus = "c";
    t.speaker = "s";
    t.audio_path = "a.wav";
    t.phone = "t";
    t.start = i;
    t.end = i + 0.05;
    t.burst = rng() % 2 ? Burst::present : Burst::absent;
    gold.records.push_back(t);
    t.label_source = LabelSource::model;
    t.confidence = (rng() % 1000) / 1000.0;
    t.burst = *t.confidence >= 0.5 ? Burst::present : Burst::absent;
    pred.records.push_back(t);
  }
  dataset::write_manifest(dir / "g.jsonl", gold);
  dataset::write_manifest(dir / "p.jsonl", pred);
  std::vector<std::string> args = {"eval", "--pred", (dir / "p.jsonl").string(), "--gold", (dir / "g.jsonl").string(),
                                   "--out", (dir / "r.json").string(), "--csv", (dir / "r.csv").string(),
                                   "--bootstrap", "2000", "--seed", "7"};
  REQUIRE(run_cli(args).code == 0);
  auto json1 = slurp(dir / "r.json"), csv1 = slurp(dir / "r.csv"), prov1 = slurp(dir / "r.json.provenance.json");
  REQUIRE(run_cli(args).code == 0);
  CHECK(slurp(dir / "r.json") == json1);
  CHECK(slurp(dir / "r.csv") == csv1);
  CHECK(slurp(dir / "r.json.provenance.json") == prov1);

  // CSV schema shared with the size curve.
  CHECK(csv1.rfind(std::string(eval::kCsvHeader) + "\n", 0) == 0);
  // The report agrees with evaluating the joined items directly.
  auto direct = eval::evaluate(eval::join_predictions(gold, pred), {0.95, 2000, 7}, "p");
  CHECK(eval::to_json(direct).dump(2) + "\n" == json1);
}

TEST_CASE("provenance holds the resolved config and replays the run") {
  auto dir = oracle::temp_dir("cli_replay");
  auto out = (dir / "curve.csv").string();
  REQUIRE(run_cli({"curve", "--out", out, "--sizes", "20,40", "--test-size", "60", "--bootstrap", "200", "--seed", "4"})
              .code == 0);
  auto csv = slurp(out);
  auto prov = nlohmann::json::parse(slurp(out + ".provenance.json"));
  CHECK(prov["tool"] == "stopburst");
  CHECK(prov["version"] == cli::version());
  CHECK(prov["subcommand"] == "curve");
  CHECK(prov["seed"] == 4);
  std::string config = prov["config"];
  CHECK(config.find("[curve]") == 0);
  CHECK(config.find("test-size=60") != std::string::npos);
  CHECK(config.find("l2=") != std::string::npos);  // defaults are recorded too

  fs::remove(out);
  auto replay = run_cli({"replay", out + ".provenance.json"});
  INFO(replay.err);
  REQUIRE(replay.code == 0);
  CHECK(slurp(out) == csv);
  // Replaying keeps the original argv on record.
  CHECK(nlohmann::json::parse(slurp(out + ".provenance.json"))["argv"] == prov["argv"]);

  CHECK(run_cli({"replay", (dir / "nothing.json").string()}).code == 1);
}

TEST_CASE("config file values apply and flags override them") {
  auto dir = oracle::temp_dir("cli_config");
  auto cfg = dir / "run.toml";
  {
    std::ofstream f(cfg);
    f << "[curve]\nout=\"" << (dir / "a.csv").generic_string() << "\"\nsizes=[20, 40]\ntest-size=60\nbootstrap=150\n"
      << "seed=9\n";
  }
  REQUIRE(run_cli({"--config", cfg.string(), "curve"}).code == 0);
  auto prov = nlohmann::json::parse(slurp(dir / "a.csv.provenance.json"));
  CHECK(prov["seed"] == 9);
  CHECK(std::string(prov["config"]).find("bootstrap=150") != std::string::npos);

  REQUIRE(run_cli({"--config", cfg.string(), "curve", "--seed", "3", "--out", (dir / "b.csv").string()}).code == 0);
  prov = nlohmann::json::parse(slurp(dir / "b.csv.provenance.json"));
  CHECK(prov["seed"] == 3);
  CHECK(std::string(prov["config"]).find("bootstrap=150") != std::string::npos);
  CHECK(run_cli({"--config", (dir / "absent.toml").string(), "curve"}).code == 2);
}

TEST_CASE("synthetic corpus labels follow the closure conventions") {
  auto dir = oracle::temp_dir("cli_synth_truth");
  pipeline::SynthCorpusOptions o;
  o.recordings = 3;
  o.stops_per_recording = 40;
  o.seed = 11;
  o.unknown_fraction = 0.2;
  auto truth = pipeline::write_synth_corpus(dir / "c", o);
  auto ex = pipeline::extract_corpus(dir / "c", {}, 0.01, dir);
  CHECK(ex.warnings.empty());
  REQUIRE(ex.manifest.records.size() == 120);
  std::size_t unknown = 0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    for (std::size_t s = 0; s < 40; ++s) {
      const auto& t = ex.manifest.records[r * 40 + s];
      CHECK(t.speaker == truth[r].stem);
      CHECK(t.token_id.rfind(truth[r].stem + ":", 0) == 0);
      if (t.burst == Burst::unknown) {
        ++unknown;
      } else {
        CHECK(t.burst == truth[r].truth[s]);
      }
      CHECK(t.corpus == "c");
      CHECK(t.audio_path == "c/" + truth[r].stem + ".wav");
    }
  }
  CHECK(unknown > 10);
  CHECK(unknown < 40);
  // Tokens cover the stop region: a full stop's token starts at the closure.
  auto grid = textgrid::read_textgrid(dir / "c" / (truth[0].stem + ".TextGrid"));
  CHECK(grid.tiers.at(0).name == "phones");
  CHECK(audio::probe_wav(dir / "c" / (truth[0].stem + ".wav")).duration() == doctest::Approx(grid.xmax));
}

TEST_CASE("extract sets clamp flags exactly where the context runs past the recording") {
  auto dir = oracle::temp_dir("cli_clamp");
  REQUIRE(run_cli({"synth-corpus", "--out", (dir / "c").string(), "--recordings", "2", "--stops", "6"}).code == 0);
  for (double context_ms : {10.0, 100.0}) {
    auto out = dir / ("m" + std::to_string(int(context_ms)) + ".jsonl");
    REQUIRE(run_cli({"extract", "--corpus", (dir / "c").string(), "--out", out.string(), "--context-ms",
                 std::to_string(context_ms)})
                .code == 0);
    auto m = dataset::read_manifest(out);
    std::size_t clamped = 0;
    for (const auto& t : m.records) {
      double dur = audio::probe_wav(dir / t.audio_path).duration();
      double c = context_ms / 1000.0;
      bool expect = t.start - c < 0 || t.end + c > dur;
      CHECK(t.clamped == expect);
      clamped += t.clamped;
    }
    if (context_ms == 10.0) CHECK(clamped == 0);
    if (context_ms == 100.0) CHECK(clamped >= 2);  // first and last stop of each recording
  }
}

TEST_CASE("export-textgrid writes the manifest labels as a burst tier") {
  auto dir = oracle::temp_dir("cli_export");
  REQUIRE(run_cli({"synth-corpus", "--out", (dir / "c").string(), "--recordings", "2", "--stops", "8"}).code == 0);
  REQUIRE(run_cli({"extract", "--corpus", (dir / "c").string(), "--out", (dir / "m.jsonl").string()}).code == 0);
  auto r = run_cli({"export-textgrid", "--manifest", (dir / "m.jsonl").string(), "--corpus", (dir / "c").string(),
                "--out-dir", (dir / "out").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  auto m = dataset::read_manifest(dir / "m.jsonl");
  std::size_t matched = 0;
  for (const auto& e : fs::directory_iterator(dir / "out")) {
    if (e.path().extension() != ".TextGrid") continue;
    auto grid = textgrid::read_textgrid(e.path());
    auto original = textgrid::read_textgrid(dir / "c" / e.path().filename());
    REQUIRE(grid.tiers.size() == 2);
    CHECK(grid.tiers[0] == original.tiers[0]);
    const auto* burst = grid.find_tier("burst");
    REQUIRE(burst != nullptr);
    for (const auto& t : m.records) {
      if (fs::path(t.audio_path).stem() != e.path().stem()) continue;
      auto it = std::find_if(burst->intervals.begin(), burst->intervals.end(),
                             [&](const auto& iv) { return iv.xmin == t.start && iv.xmax == t.end; });
      REQUIRE(it != burst->intervals.end());
      CHECK(it->text == to_string(t.burst));
      ++matched;
    }
  }
  CHECK(matched == m.records.size());
}

TEST_CASE("sampling subcommands write manifests whose audio resolves from their directory") {
  auto dir = oracle::temp_dir("cli_sampling");
  REQUIRE(run_cli({"synth-corpus", "--out", (dir / "c").string(), "--recordings", "3", "--stops", "40"}).code == 0);
  REQUIRE(run_cli({"extract", "--corpus", (dir / "c").string(), "--out", (dir / "all.jsonl").string()}).code == 0);
  auto all = dataset::read_manifest(dir / "all.jsonl");

  REQUIRE(run_cli({"sample", "--in", (dir / "all.jsonl").string(), "--out", (dir / "a/ann.jsonl").string(), "--mode",
               "annotation", "--frac", "0.25", "--cap", "1000", "--seed", "1"})
              .code == 0);
  auto ann = dataset::read_manifest(dir / "a/ann.jsonl");
  CHECK(ann.records == pipeline::rebase_audio_paths(dataset::annotation_sample(all, 0.25, 1000, 1), dir, dir / "a")
                           .records);
  for (const auto& t : ann.records) CHECK(fs::exists(dir / "a" / t.audio_path));
  CHECK(ann.provenance.find("--mode annotation") != std::string::npos);

  REQUIRE(run_cli({"sample", "--in", (dir / "all.jsonl").string(), "--out", (dir / "v/val.jsonl").string(), "--mode",
               "validation", "--n", "30", "--rest", (dir / "v/rest.jsonl").string(), "--seed", "2"})
              .code == 0);
  auto val = dataset::read_manifest(dir / "v/val.jsonl");
  auto rest = dataset::read_manifest(dir / "v/rest.jsonl");
  CHECK(val.records.size() == 30);
  CHECK(val.records.size() + rest.records.size() == all.records.size());

  auto labeled = dataset::labeled_only(all);
  dataset::write_manifest(dir / "labeled.jsonl", labeled);
  REQUIRE(run_cli({"ladder", "--in", (dir / "labeled.jsonl").string(), "--out-dir", (dir / "ladder").string(), "--sizes",
               "10,20,40", "--seed", "3"})
              .code == 0);
  std::set<std::string> prev;
  for (int size : {10, 20, 40}) {
    auto sub = dataset::read_manifest(dir / "ladder" / ("train_" + std::to_string(size) + ".jsonl"));
    CHECK(sub.records.size() == std::size_t(size));
    std::set<std::string> ids;
    for (const auto& t : sub.records) ids.insert(t.token_id);
    CHECK(std::includes(ids.begin(), ids.end(), prev.begin(), prev.end()));
    prev = ids;
  }
  CHECK(fs::exists(dir / "ladder" / "ladder.json"));
}

TEST_CASE("predict_manifest leaves excluded tokens untouched") {
  auto dir = oracle::temp_dir("cli_predict_excluded");
  pipeline::SynthCorpusOptions o;
  o.recordings = 1;
  o.stops_per_recording = 12;
  pipeline::write_synth_corpus(dir / "c", o);
  auto m = pipeline::extract_corpus(dir / "c", {}, 0.01, dir).manifest;
  m.records[3].excluded = true;
  baseline::BaselineModel zero;
  zero.sd.fill(1.0);
  zero.used.fill(true);
  baseline::BaselineBackend backend(zero);
  auto p = pipeline::predict_manifest(m, backend, dir, 0.01, 5);
  REQUIRE(p.records.size() == m.records.size());
  CHECK(p.records[3] == m.records[3]);
  for (std::size_t i = 0; i < p.records.size(); ++i) {
    if (i == 3) continue;
    CHECK(p.records[i].label_source == LabelSource::model);
    CHECK(p.records[i].confidence == 0.5);
    CHECK(p.records[i].burst == Burst::present);
  }
  p.validate();
  CHECK_THROWS_AS(pipeline::predict_manifest(m, backend, dir / "elsewhere", 0.01), NotFound);
}

namespace {

int free_port() {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

}  // namespace

TEST_CASE("serve answers the API and flushes labels on SIGTERM") {
  auto dir = oracle::temp_dir("cli_serve");
  REQUIRE(run_cli({"synth-corpus", "--out", (dir / "c").string(), "--recordings", "1", "--stops", "6"}).code == 0);
  REQUIRE(run_cli({"extract", "--corpus", (dir / "c").string(), "--out", (dir / "m.jsonl").string()}).code == 0);

  // Block SIGTERM here so the process-directed signal below reaches the
  // server's waiter thread rather than this one.
  sigset_t set, old;
  sigemptyset(&set);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, &old);

  int port = free_port();
  Result served{};
  std::thread server([&] {
    served = run_cli({"serve", "--manifest", (dir / "m.jsonl").string(), "--port", std::to_string(port),
                      "--compact-every", "100"});
  });
  httplib::Client client("127.0.0.1", port);
  bool up = false;
  for (int i = 0; i < 200 && !up; ++i) {
    auto res = client.Get("/v1/health");
    up = res && res->status == 200;
    if (!up) std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
  CHECK(up);
  std::string token;
  if (up) {
    auto next = client.Get("/v1/sessions/s1/next");
    REQUIRE(next);
    token = nlohmann::json::parse(next->body)["token"]["token_id"];
    auto posted = client.Post("/v1/sessions/s1/labels", nlohmann::json{{"token_id", token}, {"label", "absent"}}.dump(),
                              "application/json");
    REQUIRE(posted);
    CHECK(posted->status == 200);
  }
  ::kill(::getpid(), SIGTERM);
  server.join();
  pthread_sigmask(SIG_SETMASK, &old, nullptr);
  INFO(served.err);
  CHECK(served.code == 0);
  CHECK(served.out.find("listening on http://127.0.0.1:" + std::to_string(port)) != std::string::npos);
  if (!token.empty()) {
    // compact-every 100 means only the shutdown flush wrote the manifest.
    auto m = dataset::read_manifest(dir / "m.jsonl");
    auto t = m.records[m.index().at(token)];
    CHECK(t.burst == Burst::absent);
    CHECK(t.label_source == LabelSource::manual);
  }
}
