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

#include "stopburst/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "stopburst/dsp.hpp"
#include "stopburst/error.hpp"

namespace stopburst::baseline {

const std::array<std::string, kNumFeatures>& feature_names() {
  static const std::array<std::string, kNumFeatures> names = {
      "mean_energy_db", "min_energy_db",     "max_energy_db",          "dip_depth_db",
      "spike_rise_db",  "spectral_flux_max", "zero_crossing_rate_mean", "log_duration"};
  return names;
}

namespace {

constexpr std::size_t kMedianWindow = 21;  // frames, ~45 ms
constexpr std::size_t kRiseLookahead = 3;  // frames a rise may build over

double to_db(double energy) {
  if (!(energy > 0.0)) return kEnergyFloorDb;
  return std::max(10.0 * std::log10(energy), kEnergyFloorDb);
}

const std::vector<double>& frame_window() {
  static const std::vector<double> w = dsp::hann(kFrameLength);
  return w;
}

std::size_t frame_count(std::size_t n) { return n < kFrameLength ? 0 : (n - kFrameLength) / kFrameHop + 1; }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

double sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
double softplus(double eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

}  // namespace

std::vector<double> frame_energies_db(std::span<const double> samples) {
  const auto& w = frame_window();
  double w2 = 0.0;
  for (double v : w) w2 += v * v;
  std::size_t frames = frame_count(samples.size());
  std::vector<double> out(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < kFrameLength; ++i) {
      double v = samples[f * kFrameHop + i] * w[i];
      acc += v * v;
    }
    out[f] = to_db(acc / w2);
  }
  return out;
}

FeatureVector featurize(const audio::AudioClip& clip) {
  if (clip.sample_rate != audio::kCanonicalRate) {
    throw ValidationError("featurize expects 16000 Hz audio, got " + std::to_string(clip.sample_rate));
  }
  if (clip.samples.size() < kMinSamples) {
    throw ValidationError("clip too short for featurize: need at least 20 ms (" +
                          std::to_string(kMinSamples) + " samples), got " +
                          std::to_string(clip.samples.size()));
  }
  const auto& x = clip.samples;
  const auto& w = frame_window();
  const std::size_t frames = frame_count(x.size());
  std::vector<double> db = frame_energies_db(x);

  FeatureVector f{};
  double w2 = 0.0;
  for (double v : w) w2 += v * v;
  double mean_energy = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < kFrameLength; ++i) {
      double v = x[t * kFrameHop + i] * w[i];
      acc += v * v;
    }
    mean_energy += acc / w2;
  }
  f[kMeanEnergyDb] = to_db(mean_energy / static_cast<double>(frames));
  f[kMinEnergyDb] = *std::min_element(db.begin(), db.end());
  f[kMaxEnergyDb] = *std::max_element(db.begin(), db.end());

  // Largest drop below a centered running median.
  double dip = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    std::size_t lo = t >= kMedianWindow / 2 ? t - kMedianWindow / 2 : 0;
    std::size_t hi = std::min(frames, t + kMedianWindow / 2 + 1);
    double m = median(std::vector<double>(db.begin() + static_cast<std::ptrdiff_t>(lo),
                                          db.begin() + static_cast<std::ptrdiff_t>(hi)));
    dip = std::max(dip, m - db[t]);
  }
  f[kDipDepthDb] = dip;

  // Rise out of a sustained sub-threshold stretch (closure then release).
  const double threshold = median(db) - kStretchDepthDb;
  const double frame_ms = 1000.0 * kFrameLength / audio::kCanonicalRate;
  const double hop_ms = 1000.0 * kFrameHop / audio::kCanonicalRate;
  double spike = 0.0;
  std::size_t run = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    if (db[t] < threshold) {
      ++run;
      continue;
    }
    if (run > 0 && (static_cast<double>(run - 1) * hop_ms + frame_ms) >= kStretchMs) {
      double peak = db[t];
      for (std::size_t k = t; k < std::min(frames, t + kRiseLookahead); ++k) peak = std::max(peak, db[k]);
      spike = std::max(spike, peak - db[t - 1]);
    }
    run = 0;
  }
  f[kSpikeRiseDb] = spike;

  // Half-wave rectified spectral flux between consecutive frames.
  static const dsp::RealFft fft(kFrameLength);
  double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> frame(kFrameLength);
  std::vector<double> prev, cur(fft.bins());
  double flux_max = 0.0;
  double zcr_sum = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    const double* p = x.data() + t * kFrameHop;
    std::size_t crossings = 0;
    for (std::size_t i = 0; i < kFrameLength; ++i) {
      frame[i] = p[i] * w[i];
      if (i > 0 && ((p[i] >= 0) != (p[i - 1] >= 0)) && (p[i] != 0 || p[i - 1] != 0)) ++crossings;
    }
    zcr_sum += static_cast<double>(crossings) / static_cast<double>(kFrameLength - 1);
    auto spec = fft.transform(frame);
    for (std::size_t k = 0; k < cur.size(); ++k) cur[k] = 2.0 * std::abs(spec[k]) / wsum;
    if (!prev.empty()) {
      double acc = 0.0;
      for (std::size_t k = 0; k < cur.size(); ++k) {
        double d = std::max(0.0, cur[k] - prev[k]);
        acc += d * d;
      }
      flux_max = std::max(flux_max, std::sqrt(acc));
    }
    prev = cur;
  }
  f[kSpectralFluxMax] = flux_max > 0 ? std::max(20.0 * std::log10(flux_max), kEnergyFloorDb) : kEnergyFloorDb;
  f[kZeroCrossingRate] = zcr_sum / static_cast<double>(frames);
  f[kLogDuration] = std::log(clip.duration());
  return f;
}

namespace detail {

double objective(const Eigen::VectorXd& params, const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                 double l2) {
  const auto n = static_cast<double>(z.rows());
  Eigen::VectorXd eta = (z * params.tail(params.size() - 1)).array() + params(0);
  double nll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) nll += softplus(eta(i)) - y(i) * eta(i);
  return nll / n + 0.5 * l2 * params.tail(params.size() - 1).squaredNorm();
}

Eigen::VectorXd gradient(const Eigen::VectorXd& params, const Eigen::MatrixXd& z,
                         const Eigen::VectorXd& y, double l2) {
  const auto n = static_cast<double>(z.rows());
  Eigen::VectorXd eta = (z * params.tail(params.size() - 1)).array() + params(0);
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = sigmoid(eta(i)) - y(i);
  Eigen::VectorXd g(params.size());
  g(0) = resid.sum() / n;
  g.tail(params.size() - 1) = z.transpose() * resid / n + l2 * params.tail(params.size() - 1);
  return g;
}

}  // namespace detail

BaselineModel train_baseline(std::span<const LabeledFeatures> data, double l2, std::uint64_t seed) {
  if (!(l2 >= 0.0)) throw ValidationError("l2 must be non-negative");
  std::size_t n_pos = 0;
  for (const auto& d : data) {
    if (d.label != 0 && d.label != 1) throw ValidationError("labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(d.label);
  }
  if (n_pos == 0 || n_pos == data.size()) {
    throw ValidationError("training data must contain both burst labels");
  }
  const auto n = static_cast<Eigen::Index>(data.size());

  BaselineModel model;
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    double mean = 0.0;
    for (const auto& d : data) mean += d.x[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& d : data) var += (d.x[j] - mean) * (d.x[j] - mean);
    double sd = std::sqrt(var / static_cast<double>(n));
    model.mean[j] = mean;
    model.used[j] = sd > 1e-12 * std::max(1.0, std::abs(mean));
    model.sd[j] = model.used[j] ? sd : 1.0;
    if (model.used[j]) active.push_back(j);
  }

  const auto d = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd z(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = data[static_cast<std::size_t>(i)];
    y(i) = row.label;
    for (Eigen::Index k = 0; k < d; ++k) {
      std::size_t j = active[static_cast<std::size_t>(k)];
      z(i, k) = (row.x[j] - model.mean[j]) / model.sd[j];
    }
  }

  Eigen::VectorXd params = Eigen::VectorXd::Zero(d + 1);
  double loss = detail::objective(params, z, y, l2);
  model.metadata.loss_trace.push_back(loss);
  bool converged = false;
  int iter = 0;
  constexpr int kMaxIter = 100;
  constexpr double kTol = 1e-8;
  for (; iter < kMaxIter; ++iter) {
    Eigen::VectorXd g = detail::gradient(params, z, y, l2);
    if (g.cwiseAbs().maxCoeff() < kTol) {
      converged = true;
      break;
    }
    Eigen::VectorXd eta = (z * params.tail(d)).array() + params(0);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d + 1, d + 1);
    Eigen::MatrixXd zx(n, d + 1);
    zx.col(0).setOnes();
    zx.rightCols(d) = z;
    Eigen::VectorXd wts(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double p = sigmoid(eta(i));
      wts(i) = p * (1.0 - p);
    }
    h = zx.transpose() * wts.asDiagonal() * zx / static_cast<double>(n);
    h.diagonal().tail(d).array() += l2;
    Eigen::VectorXd step = h.ldlt().solve(g);
    if (!step.allFinite()) step = g;

    double t = 1.0;
    Eigen::VectorXd candidate = params - step;
    double cand_loss = detail::objective(candidate, z, y, l2);
    while (!(cand_loss <= loss) && t > 1e-10) {
      t *= 0.5;
      candidate = params - t * step;
      cand_loss = detail::objective(candidate, z, y, l2);
    }
    if (!(cand_loss <= loss)) {
      // No descent available at machine precision; treat as converged if
      // the gradient is already tiny in relative terms.
      break;
    }
    params = candidate;
    loss = cand_loss;
    model.metadata.loss_trace.push_back(loss);
  }
  if (!converged) {
    Eigen::VectorXd g = detail::gradient(params, z, y, l2);
    converged = g.cwiseAbs().maxCoeff() < kTol;
  }

  if (l2 == 0.0) {
    Eigen::VectorXd eta = (z * params.tail(d)).array() + params(0);
    bool separated = true;
    for (Eigen::Index i = 0; i < n && separated; ++i) {
      separated = (y(i) > 0.5) ? eta(i) > 0 : eta(i) < 0;
    }
    if (separated) {
      throw NonConvergence(
          "training data are perfectly separable, so the unpenalized fit has no finite "
          "optimum; retrain with l2 > 0");
    }
  }
  if (!converged) {
    throw NonConvergence("IRLS did not reach max |gradient| < 1e-8 within " + std::to_string(kMaxIter) +
                         " iterations (final loss " + std::to_string(loss) + ")");
  }

  model.bias = params(0);
  for (Eigen::Index k = 0; k < d; ++k) model.weights[active[static_cast<std::size_t>(k)]] = params(k + 1);
  model.metadata.n = data.size();
  model.metadata.seed = seed;
  model.metadata.l2 = l2;
  model.metadata.final_loss = loss;
  model.metadata.iterations = iter;
  model.metadata.converged = converged;
  return model;
}

double predict_features(const BaselineModel& model, const FeatureVector& x) {
  double eta = model.bias;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (!model.used[j]) continue;
    eta += model.weights[j] * (x[j] - model.mean[j]) / model.sd[j];
  }
  return sigmoid(eta);
}

double predict_baseline(const BaselineModel& model, const audio::AudioClip& clip) {
  return predict_features(model, featurize(clip));
}

std::vector<double> BaselineBackend::classify_batch(std::span<const audio::AudioClip> clips) const {
  std::vector<double> out;
  out.reserve(clips.size());
  for (const auto& clip : clips) {
    if (clip.sample_rate != audio::kCanonicalRate) {
      out.push_back(predict_baseline(model_, audio::resample(clip, audio::kCanonicalRate)));
    } else {
      out.push_back(predict_baseline(model_, clip));
    }
  }
  return out;
}

nlohmann::json to_json(const BaselineModel& model) {
  nlohmann::json j;
  j["kind"] = "baseline-logistic";
  j["feature_names"] = feature_names();
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  j["mean"] = model.mean;
  j["sd"] = model.sd;
  j["used"] = model.used;
  const auto& m = model.metadata;
  j["metadata"] = {{"n", m.n},
                   {"seed", m.seed},
                   {"l2", m.l2},
                   {"final_loss", m.final_loss},
                   {"iterations", m.iterations},
                   {"converged", m.converged}};
  return j;
}

BaselineModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "baseline-logistic") {
      throw LoadError("not a baseline model document");
    }
    if (j.at("feature_names").get<std::vector<std::string>>() !=
        std::vector<std::string>(feature_names().begin(), feature_names().end())) {
      throw LoadError("baseline model was trained on a different feature set");
    }
    BaselineModel model;
    model.weights = j.at("weights").get<FeatureVector>();
    model.bias = j.at("bias").get<double>();
    model.mean = j.at("mean").get<FeatureVector>();
    model.sd = j.at("sd").get<FeatureVector>();
    model.used = j.at("used").get<std::array<bool, kNumFeatures>>();
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      if (model.used[k] && !(model.sd[k] > 0)) throw LoadError("baseline model has a non-positive sd");
    }
    const auto& m = j.at("metadata");
    model.metadata.n = m.at("n").get<std::size_t>();
    model.metadata.seed = m.at("seed").get<std::uint64_t>();
    model.metadata.l2 = m.at("l2").get<double>();
    model.metadata.final_loss = m.at("final_loss").get<double>();
    model.metadata.iterations = m.at("iterations").get<int>();
    model.metadata.converged = m.at("converged").get<bool>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed baseline model: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const BaselineModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(model).dump(2) << "\n";
}

BaselineModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("baseline model not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace stopburst::baseline
