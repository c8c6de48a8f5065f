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
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "stopburst/baseline.hpp"
#include "stopburst/error.hpp"
#include "stopburst/synth.hpp"

using namespace stopburst;
using namespace stopburst::baseline;

namespace {

std::vector<LabeledFeatures> synthetic_features(std::size_t per_class, std::uint64_t seed, double snr) {
  std::vector<LabeledFeatures> out;
  for (const auto& c : synth::synthesize_set(per_class, per_class, seed, snr)) {
    out.push_back({featurize(c.clip), c.burst == Burst::present ? 1 : 0});
  }
  return out;
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Penalized mean NLL of a one-feature logistic model, written out directly.
double nll_1d(const std::vector<double>& z, const std::vector<int>& y, double b, double w, double l2) {
  double acc = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double p = sigmoid(b + w * z[i]);
    acc -= y[i] ? std::log(p) : std::log1p(-p);
  }
  return acc / static_cast<double>(z.size()) + 0.5 * l2 * w * w;
}

// Coarse-to-fine grid search for the minimizing (b, w).
std::pair<double, double> grid_fit_1d(const std::vector<double>& z, const std::vector<int>& y, double l2) {
  double bc = 0, wc = 0, span = 8;
  for (int level = 0; level < 12; ++level) {
    double best = INFINITY, bb = bc, bw = wc;
    for (int i = -20; i <= 20; ++i) {
      for (int j = -20; j <= 20; ++j) {
        double b = bc + span * i / 20.0, w = wc + span * j / 20.0;
        double v = nll_1d(z, y, b, w, l2);
        if (v < best) {
          best = v;
          bb = b;
          bw = w;
        }
      }
    }
    bc = bb;
    wc = bw;
    span /= 4;
  }
  return {bc, wc};
}

}  // namespace

TEST_CASE("silence: no dip and no spike") {
  audio::AudioClip c;
  c.samples.assign(1600, 0.0);
  auto f = featurize(c);
  CHECK(f[kDipDepthDb] == 0.0);
  CHECK(f[kSpikeRiseDb] == 0.0);
  CHECK(f[kMinEnergyDb] == kEnergyFloorDb);
  CHECK(f[kMaxEnergyDb] == kEnergyFloorDb);
  CHECK(f[kZeroCrossingRate] == 0.0);
  CHECK(f[kLogDuration] == doctest::Approx(std::log(0.1)));
  for (double v : f) CHECK(std::isfinite(v));
}

TEST_CASE("spike rise separates the fixed-seed examples") {
  synth::SynthSpec spec;
  spec.realization = synth::Realization::full_stop;
  spec.seed = 1;
  CHECK(featurize(synth::synthesize_stop(spec).clip)[kSpikeRiseDb] > 20);
  spec.realization = synth::Realization::fricativised;
  CHECK(featurize(synth::synthesize_stop(spec).clip)[kSpikeRiseDb] < 10);
}

TEST_CASE("frame grid and minimum length") {
  std::vector<double> x(800, 0.5);
  auto e = frame_energies_db(x);
  CHECK(e.size() == (800 - 80) / 32 + 1);
  audio::AudioClip shortclip;
  shortclip.samples.assign(319, 0.1);
  try {
    featurize(shortclip);
    FAIL("expected ValidationError");
  } catch (const ValidationError& err) {
    CHECK(std::string(err.what()).find("20 ms") != std::string::npos);
  }
  audio::AudioClip wrong_rate;
  wrong_rate.sample_rate = 8000;
  wrong_rate.samples.assign(800, 0.1);
  CHECK_THROWS_AS(featurize(wrong_rate), ValidationError);
}

TEST_CASE("featurize is deterministic and frame energies match a direct computation") {
  auto clip = synth::synthesize_stop(synth::random_spec(synth::Realization::full_stop, 3, 20)).clip;
  CHECK(featurize(clip) == featurize(clip));
  auto e = frame_energies_db(clip.samples);
  // Independent recomputation of frame 7: Hann-weighted mean square in dB.
  const std::size_t start = 7 * 32;
  double acc = 0, wsum = 0;
  for (std::size_t i = 0; i < 80; ++i) {
    double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / 79.0);
    acc += w * w * clip.samples[start + i] * clip.samples[start + i];
    wsum += w * w;
  }
  CHECK(e[7] == doctest::Approx(std::max(10 * std::log10(acc / wsum), kEnergyFloorDb)).epsilon(1e-9));
}

TEST_CASE("one informative feature gets the largest weight and matches a 1-D fit") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  std::vector<LabeledFeatures> data;
  std::vector<double> z;
  std::vector<int> y;
  for (int i = 0; i < 400; ++i) {
    int label = i % 2;
    FeatureVector x{};
    x[kSpikeRiseDb] = label ? 30.0 + nd(rng) : 2.0 + nd(rng);
    data.push_back({x, label});
    y.push_back(label);
  }
  auto m = train_baseline(data, 1.0, 0);
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    if (k != kSpikeRiseDb) CHECK(m.weights[k] == 0.0);
  }
  CHECK(m.used[kSpikeRiseDb]);
  for (const auto& d : data) z.push_back((d.x[kSpikeRiseDb] - m.mean[kSpikeRiseDb]) / m.sd[kSpikeRiseDb]);
  auto [b, w] = grid_fit_1d(z, y, 1.0);
  CHECK(m.weights[kSpikeRiseDb] == doctest::Approx(w).epsilon(1e-5));
  CHECK(m.bias == doctest::Approx(b).scale(1).epsilon(1e-5));

  // With noise in the other features it still dominates.
  for (auto& d : data) {
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      if (k != kSpikeRiseDb) d.x[k] = nd(rng);
    }
  }
  auto m2 = train_baseline(data, 1.0, 0);
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    if (k != kSpikeRiseDb) CHECK(std::abs(m2.weights[k]) < std::abs(m2.weights[kSpikeRiseDb]));
  }
}

TEST_CASE("labels independent of features give near-zero weights") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::vector<LabeledFeatures> data;
  for (int i = 0; i < 1000; ++i) {
    FeatureVector x;
    for (double& v : x) v = nd(rng);
    data.push_back({x, 0});
  }
  std::vector<int> labels(1000);
  for (int i = 0; i < 1000; ++i) labels[i] = i % 2;
  std::shuffle(labels.begin(), labels.end(), rng);
  for (int i = 0; i < 1000; ++i) data[i].label = labels[i];
  auto m = train_baseline(data, 1.0, 0);
  for (double w : m.weights) CHECK(std::abs(w) < 0.1);
}

TEST_CASE("duplicating the data leaves the model unchanged") {
  auto data = synthetic_features(40, 6, 20);
  auto twice = data;
  twice.insert(twice.end(), data.begin(), data.end());
  auto a = train_baseline(data, 0.5, 1);
  auto b = train_baseline(twice, 0.5, 1);
  for (std::size_t k = 0; k < kNumFeatures; ++k) CHECK(a.weights[k] == doctest::Approx(b.weights[k]).epsilon(1e-9));
  CHECK(a.bias == doctest::Approx(b.bias).epsilon(1e-9));
}

TEST_CASE("zero model predicts one half and probabilities are complementary") {
  BaselineModel zero;
  zero.sd.fill(1.0);
  auto clip = synth::synthesize_stop({}).clip;
  CHECK(predict_baseline(zero, clip) == 0.5);
  auto m = train_baseline(synthetic_features(30, 2, 20), 1.0, 0);
  double p = predict_baseline(m, clip);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(p + (1.0 - p) == 1.0);
  BaselineBackend backend(m);
  std::vector<audio::AudioClip> batch = {clip, clip};
  auto probs = backend.classify_batch(batch);
  REQUIRE(probs.size() == 2);
  CHECK(probs[0] == p);
  CHECK(backend.classify_batch({}).empty());
}

TEST_CASE("training on 2k synthetic tokens separates held-out full stops") {
  auto train = synthetic_features(1000, 10, 20);
  auto model = train_baseline(train, 1e-3, 10);
  CHECK(model.metadata.converged);
  auto test = synth::synthesize_set(100, 100, 99, 20);
  double present_mean = 0;
  std::size_t correct = 0, n_present = 0;
  for (const auto& c : test) {
    double p = predict_baseline(model, c.clip);
    bool is_present = c.burst == Burst::present;
    if (is_present) {
      present_mean += p;
      ++n_present;
    }
    correct += ((p >= 0.5) == is_present);
  }
  CHECK(present_mean / n_present > 0.9);
  CHECK(static_cast<double>(correct) / test.size() >= 0.95);
  // Loss trace never goes up.
  const auto& tr = model.metadata.loss_trace;
  REQUIRE(tr.size() >= 2);
  for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr[i] <= tr[i - 1]);
}

TEST_CASE("analytic gradient matches central differences") {
  auto data = synthetic_features(25, 12, 20);
  Eigen::MatrixXd z(data.size(), kNumFeatures);
  Eigen::VectorXd y(data.size());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < kNumFeatures; ++k) z(i, k) = data[i].x[k] / 50.0 + nd(rng);
    y(i) = data[i].label;
  }
  for (int point = 0; point < 10; ++point) {
    Eigen::VectorXd params(kNumFeatures + 1);
    for (int k = 0; k < params.size(); ++k) params(k) = nd(rng);
    auto g = detail::gradient(params, z, y, 0.7);
    for (int k = 0; k < params.size(); ++k) {
      const double h = 1e-5;
      Eigen::VectorXd up = params, dn = params;
      up(k) += h;
      dn(k) -= h;
      double fd = (detail::objective(up, z, y, 0.7) - detail::objective(dn, z, y, 0.7)) / (2 * h);
      CHECK(std::abs(fd - g(k)) <= 1e-6 * std::max(1.0, std::abs(g(k))));
    }
  }
}

TEST_CASE("training preconditions") {
  std::vector<LabeledFeatures> one_class(10);
  for (std::size_t i = 0; i < 10; ++i) one_class[i].x.fill(static_cast<double>(i));
  CHECK_THROWS_AS(train_baseline(one_class, 1.0, 0), ValidationError);
  std::vector<LabeledFeatures> sep;
  for (int i = 0; i < 20; ++i) {
    FeatureVector x{};
    x[0] = i;
    sep.push_back({x, i >= 10});
  }
  CHECK_THROWS_AS(train_baseline(sep, -1.0, 0), ValidationError);
  try {
    train_baseline(sep, 0.0, 0);
    FAIL("expected NonConvergence");
  } catch (const NonConvergence& e) {
    CHECK(std::string(e.what()).find("l2") != std::string::npos);
  }
  CHECK_NOTHROW(train_baseline(sep, 0.1, 0));
}

TEST_CASE("model JSON round trip") {
  auto m = train_baseline(synthetic_features(20, 3, 20), 1.0, 7);
  auto dir = oracle::temp_dir("baseline_json");
  save_model(dir / "m.json", m);
  auto back = load_model(dir / "m.json");
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.mean == m.mean);
  CHECK(back.sd == m.sd);
  CHECK(back.metadata.seed == 7);
  CHECK(back.metadata.n == 40);
  auto j = to_json(m);
  j["kind"] = "something-else";
  CHECK_THROWS_AS(model_from_json(j), LoadError);
  CHECK_THROWS_AS(load_model(dir / "missing.json"), NotFound);
}
