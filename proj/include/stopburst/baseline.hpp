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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "stopburst/audio.hpp"
#include "stopburst/classifier.hpp"

namespace stopburst::baseline {

inline constexpr std::size_t kNumFeatures = 8;

// Frame grid used by featurize(): 5 ms Hann frames, 2 ms hop, at 16 kHz,
// anchored at sample 0.
inline constexpr std::size_t kFrameLength = 80;
inline constexpr std::size_t kFrameHop = 32;
inline constexpr std::size_t kMinSamples = 320;  // 20 ms
inline constexpr double kEnergyFloorDb = -100.0;
// A spike counts only after a run of frames at least this long sitting more
// than kStretchDepthDb below the clip's median frame energy.
inline constexpr double kStretchMs = 20.0;
inline constexpr double kStretchDepthDb = 15.0;

enum Feature : std::size_t {
  kMeanEnergyDb = 0,
  kMinEnergyDb,
  kMaxEnergyDb,
  kDipDepthDb,
  kSpikeRiseDb,
  kSpectralFluxMax,
  kZeroCrossingRate,
  kLogDuration,
};

const std::array<std::string, kNumFeatures>& feature_names();

using FeatureVector = std::array<double, kNumFeatures>;

// Per-frame energies in dB (floored) on the fixed grid; exposed for tests.
std::vector<double> frame_energies_db(std::span<const double> samples);

// Throws ValidationError for clips that are not at 16 kHz or are shorter
// than 20 ms.
FeatureVector featurize(const audio::AudioClip& clip);

struct TrainingMetadata {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double l2 = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = false;
  // Penalized objective after every accepted IRLS step, starting at the
  // initial point.
  std::vector<double> loss_trace;
};

struct BaselineModel {
  FeatureVector weights{};
  double bias = 0.0;
  FeatureVector mean{};
  FeatureVector sd{};
  // Features with zero spread in training are carried with weight 0.
  std::array<bool, kNumFeatures> used{};
  TrainingMetadata metadata;
};

struct LabeledFeatures {
  FeatureVector x;
  int label;  // 1 = burst present
};

// L2-penalized logistic regression on standardized features, fitted by
// iteratively reweighted least squares. The objective is the mean negative
// log-likelihood plus (l2 / 2) |w|^2 (bias unpenalized), so duplicating the
// data leaves the fit unchanged. Converged when max |gradient| < 1e-8,
// at most 100 iterations; step halving keeps the objective non-increasing.
// Throws ValidationError without both labels or with l2 < 0, and
// NonConvergence for perfectly separable data at l2 == 0.
BaselineModel train_baseline(std::span<const LabeledFeatures> data, double l2, std::uint64_t seed);

// P(burst = present).
double predict_features(const BaselineModel& model, const FeatureVector& x);
double predict_baseline(const BaselineModel& model, const audio::AudioClip& clip);

nlohmann::json to_json(const BaselineModel& model);
BaselineModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const BaselineModel& model);
BaselineModel load_model(const std::filesystem::path& path);

// Building blocks of the training problem, over standardized design rows
// (without intercept column). params = [bias, w_1..w_d].
namespace detail {
double objective(const Eigen::VectorXd& params, const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                 double l2);
Eigen::VectorXd gradient(const Eigen::VectorXd& params, const Eigen::MatrixXd& z,
                         const Eigen::VectorXd& y, double l2);
}  // namespace detail

class BaselineBackend final : public ClassifierBackend {
 public:
  explicit BaselineBackend(BaselineModel model) : model_(std::move(model)) {}

  std::string name() const override { return "baseline"; }
  int expected_sample_rate() const override { return audio::kCanonicalRate; }
  std::vector<double> classify_batch(std::span<const audio::AudioClip> clips) const override;

  const BaselineModel& model() const noexcept { return model_; }

 private:
  BaselineModel model_;
};

}  // namespace stopburst::baseline
