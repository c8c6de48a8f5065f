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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "stopburst/audio.hpp"
#include "stopburst/baseline.hpp"
#include "stopburst/error.hpp"
#include "stopburst/neural.hpp"
#include "stopburst/onnx_graph.hpp"
#include "stopburst/synth.hpp"

using namespace stopburst;
using nlohmann::json;

namespace {

std::filesystem::path onnx_dir() { return oracle::fixture_dir() / "onnx"; }

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

onnx::Tensor tensor_from(const json& j) {
  onnx::Shape shape = j["shape"].get<onnx::Shape>();
  const std::string kind = j["dtype"];
  if (kind == "float") {
    std::vector<float> data;
    for (const auto& v : j["data"]) data.push_back(v.is_null() ? NAN : v.get<float>());
    return onnx::Tensor::floats(shape, data);
  }
  std::vector<std::int64_t> data;
  for (const auto& v : j["data"]) data.push_back(v.is_boolean() ? v.get<bool>() : v.get<std::int64_t>());
  return kind == "bool" ? onnx::Tensor::bools(shape, data) : onnx::Tensor::ints(shape, data);
}

std::unique_ptr<neural::NeuralModel> tiny() { return neural::NeuralModel::load(onnx_dir() / "tiny_w2v.onnx"); }

std::vector<audio::AudioClip> random_clips(std::size_t n, std::uint64_t seed) {
  std::vector<audio::AudioClip> out;
  for (std::size_t k = 0; k < n; ++k) {
    auto r = k % 2 ? synth::Realization::full_stop : synth::Realization::fricativised;
    out.push_back(synth::synthesize_stop(synth::random_spec(r, seed + k, 20)).clip);
  }
  return out;
}

}  // namespace

TEST_CASE("operator kernels match onnxruntime on single-op graphs") {
  json cases = read_json(onnx_dir() / "ops" / "cases.json");
  REQUIRE(cases["cases"].size() >= 50);
  for (const auto& c : cases["cases"]) {
    const std::string name = c["name"];
    CAPTURE(name);
    auto graph = onnx::Graph::load(onnx_dir() / "ops" / c["model"].get<std::string>());
    std::map<std::string, onnx::Tensor> feeds;
    for (const auto& [k, v] : c["inputs"].items()) feeds.emplace(k, tensor_from(v));
    auto got = graph.run(feeds);
    REQUIRE(got.size() == c["outputs"].size());
    for (std::size_t q = 0; q < graph.outputs().size(); ++q) {
      const auto& oname = graph.outputs()[q].name;
      CAPTURE(oname);
      onnx::Tensor want = tensor_from(c["outputs"][oname]);
      const onnx::Tensor& have = got[q];
      CHECK(have.shape == want.shape);
      CHECK(have.dtype == want.dtype);
      if (have.shape != want.shape || have.dtype != want.dtype) continue;
      if (want.dtype == onnx::DType::f32) {
        for (std::size_t e = 0; e < want.f.size(); ++e) {
          if (std::isnan(want.f[e])) {
            CHECK(std::isnan(have.f[e]));
          } else {
            CHECK(have.f[e] == doctest::Approx(want.f[e]).epsilon(1e-5).scale(1.0));
          }
        }
      } else {
        CHECK(have.i == want.i);
      }
    }
  }
}

TEST_CASE("graph feeds are validated") {
  auto graph = onnx::Graph::load(onnx_dir() / "ops" / "binary_Add.onnx");
  std::map<std::string, onnx::Tensor> feeds;
  feeds.emplace("a", onnx::Tensor::floats({2, 3, 4}, std::vector<float>(24, 1.0f)));
  CHECK_THROWS_AS(graph.run(feeds), ValidationError);  // b missing
  feeds.emplace("b", onnx::Tensor::ints({3, 1}, {1, 2, 3}));
  CHECK_THROWS_AS(graph.run(feeds), ValidationError);  // wrong dtype
  feeds["b"] = onnx::Tensor::floats({3, 2}, std::vector<float>(6, 1.0f));
  CHECK_THROWS_AS(graph.run(feeds), ValidationError);  // fixed dims differ
}

TEST_CASE("unparseable or unsupported models are rejected") {
  auto dir = oracle::temp_dir("onnx_bad");
  std::ofstream(dir / "junk.onnx") << "this is not protobuf at all \x01\x02\x03";
  CHECK_THROWS_AS(onnx::Graph::load(dir / "junk.onnx"), LoadError);
  CHECK_THROWS_AS(onnx::Graph::load(dir / "missing.onnx"), NotFound);
  try {
    onnx::Graph::load(onnx_dir() / "unsupported_op.onnx");
    FAIL("expected UnsupportedFormat");
  } catch (const UnsupportedFormat& e) {
    CHECK(std::string(e.what()).find("Hardmax") != std::string::npos);
  }
}

TEST_CASE("tiny exported model loads with its metadata") {
  auto m = tiny();
  CHECK(m->metadata().base_model == "tiny-fixture");
  CHECK(m->metadata().run_id == "fixture-run-1");
  CHECK(m->metadata().labels == std::vector<std::string>{"absent", "present"});
  CHECK(m->present_index() == 1);
  CHECK(m->expected_sample_rate() == 16000);
  CHECK(m->name() == "neural:tiny-fixture");
}

TEST_CASE("parity with the exporting side on the embedded clips") {
  auto m = tiny();
  json expected = read_json(onnx_dir() / "parity" / "expected.json");
  std::vector<audio::AudioClip> clips;
  for (const auto& c : expected["clips"]) {
    clips.push_back(audio::read_wav(onnx_dir() / "parity" / c["file"].get<std::string>()));
    CHECK(clips.back().samples.size() == c["samples"].get<std::size_t>());
  }
  REQUIRE(clips.size() == 8);
  auto probs = m->classify_batch(clips);
  for (std::size_t k = 0; k < clips.size(); ++k) {
    CAPTURE(k);
    const auto& c = expected["clips"][k];
    CHECK(std::abs(probs[k] - c["trainer_probability"].get<double>()) < 1e-3);
    CHECK(std::abs(probs[k] - c["reference_probability"].get<double>()) < 1e-5);
    auto z = m->logits(clips[k]);
    CHECK(z[0] == doctest::Approx(c["reference_logits"][0].get<double>()).epsilon(1e-4).scale(1.0));
    CHECK(z[1] == doctest::Approx(c["reference_logits"][1].get<double>()).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("short clips are padded to the model minimum") {
  auto m = tiny();
  audio::AudioClip c;
  for (int k = 0; k < 100; ++k) c.samples.push_back(0.3 * std::sin(k * 0.2));
  auto x = m->prepare(c);
  CHECK(x.size() == 400);
  for (std::size_t k = 100; k < 400; ++k) CHECK(x[k] == 0.0f);
  double mean = 0, var = 0;
  for (std::size_t k = 0; k < 100; ++k) mean += x[k];
  mean /= 100;
  for (std::size_t k = 0; k < 100; ++k) var += (x[k] - mean) * (x[k] - mean);
  CHECK(mean == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(var / 100 == doctest::Approx(1.0).epsilon(1e-4));
  std::vector<audio::AudioClip> one = {c};
  auto p = m->classify_batch(one);
  REQUIRE(p.size() == 1);
  CHECK(p[0] > 0.0);
  CHECK(p[0] < 1.0);
}

TEST_CASE("batching does not change any probability") {
  auto m = tiny();
  auto pool = random_clips(64, 500);
  std::vector<double> single;
  for (const auto& c : pool) single.push_back(m->classify_batch(std::span(&c, 1))[0]);
  for (std::size_t size : {2u, 8u, 64u}) {
    std::vector<audio::AudioClip> batch(pool.begin(), pool.begin() + size);
    auto p = m->classify_batch(batch);
    REQUIRE(p.size() == size);
    for (std::size_t k = 0; k < size; ++k) CHECK(std::abs(p[k] - single[k]) <= 1e-5);
  }
  // Larger than one chunk, shuffled order.
  std::vector<std::size_t> order(64);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(1));
  std::vector<audio::AudioClip> big;
  for (int rep = 0; rep < 2; ++rep) {
    for (auto k : order) big.push_back(pool[k]);
  }
  auto p = m->classify_batch(big);
  for (std::size_t q = 0; q < big.size(); ++q) CHECK(std::abs(p[q] - single[order[q % 64]]) <= 1e-5);
  CHECK(m->classify_batch({}).empty());
}

TEST_CASE("probabilities are valid, deterministic and thread-safe") {
  auto m = tiny();
  auto clips = random_clips(12, 900);
  auto p = m->classify_batch(clips);
  for (double v : p) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(std::abs(v + (1.0 - v) - 1.0) < 1e-6);
  }
  CHECK(m->classify_batch(clips) == p);
  std::vector<std::vector<double>> results(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) threads.emplace_back([&, t] { results[t] = m->classify_batch(clips); });
  for (auto& th : threads) th.join();
  for (const auto& r : results) CHECK(r == p);
}

TEST_CASE("load contract violations") {
  SUBCASE("three logits") {
    try {
      neural::NeuralModel::load(onnx_dir() / "three_logit.onnx");
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("shape") != std::string::npos);
    }
  }
  SUBCASE("nonexistent path") {
    CHECK_THROWS_AS(neural::NeuralModel::load(onnx_dir() / "nope.onnx"), NotFound);
  }
  SUBCASE("two inputs") { CHECK_THROWS_AS(neural::NeuralModel::load(onnx_dir() / "two_inputs.onnx"), LoadError); }
  SUBCASE("missing and broken metadata") {
    auto dir = oracle::temp_dir("neural_meta");
    std::filesystem::copy_file(onnx_dir() / "tiny_w2v.onnx", dir / "m.onnx");
    try {
      neural::NeuralModel::load(dir / "m.onnx");
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("metadata") != std::string::npos);
    }
    json meta = read_json(onnx_dir() / "tiny_w2v.json");
    auto write = [&](const json& j) { std::ofstream(dir / "m.onnx.json") << j.dump(); };

    json no_base = meta;
    no_base.erase("base_model");
    write(no_base);
    try {
      neural::NeuralModel::load(dir / "m.onnx");
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("base_model") != std::string::npos);
    }

    json other_norm = meta;
    other_norm["normalization"] = "peak";
    write(other_norm);
    CHECK_THROWS_AS(neural::NeuralModel::load(dir / "m.onnx"), LoadError);

    json swapped = meta;
    swapped["labels"] = {"present", "absent"};
    write(swapped);
    auto m = neural::NeuralModel::load(dir / "m.onnx");
    CHECK(m->present_index() == 0);
    auto clips = random_clips(3, 7);
    auto p_swapped = m->classify_batch(clips);
    auto p = tiny()->classify_batch(clips);
    for (std::size_t k = 0; k < 3; ++k) CHECK(p_swapped[k] == doctest::Approx(1.0 - p[k]));

    json three = meta;
    three["labels"] = {"absent", "present", "unsure"};
    write(three);
    CHECK_THROWS_AS(neural::NeuralModel::load(dir / "m.onnx"), LoadError);

    write(meta);
    CHECK_NOTHROW(neural::NeuralModel::load(dir / "m.onnx"));
  }
}

TEST_CASE("non-finite output is a backend fault") {
  auto m = neural::NeuralModel::load(onnx_dir() / "nan_on_negative.onnx");
  auto clips = random_clips(1, 3);
  CHECK_THROWS_AS(m->classify_batch(clips), BackendFault);
}

TEST_CASE("wrong sample rate is rejected") {
  auto m = tiny();
  audio::AudioClip c;
  c.sample_rate = 8000;
  c.samples.assign(800, 0.1);
  CHECK_THROWS_AS(m->classify_batch(std::span(&c, 1)), ValidationError);
}

TEST_CASE("open_backend dispatches on the scheme") {
  auto n = open_backend("neural:" + (onnx_dir() / "tiny_w2v.onnx").string());
  CHECK(n->name() == "neural:tiny-fixture");
  auto dir = oracle::temp_dir("open_backend");
  baseline::BaselineModel zero;
  zero.sd.fill(1.0);
  baseline::save_model(dir / "b.json", zero);
  auto b = open_backend("baseline:" + (dir / "b.json").string());
  CHECK(b->name() == "baseline");
  auto clips = random_clips(2, 1);
  CHECK(b->classify_batch(clips) == std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(open_backend("tflite:x"), ValidationError);
  CHECK_THROWS_AS(open_backend("nocolon"), ValidationError);
  CHECK_THROWS_AS(open_backend("neural:/does/not/exist.onnx"), NotFound);
}
