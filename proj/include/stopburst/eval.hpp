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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stopburst/manifest.hpp"

namespace stopburst::eval {

// Positive class is burst = present.
struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

enum class Statistic { accuracy, precision, recall, f1_present, f1_absent, macro_f1 };
inline constexpr std::array<Statistic, 6> kAllStatistics = {Statistic::accuracy,   Statistic::precision,
                                                            Statistic::recall,     Statistic::f1_present,
                                                            Statistic::f1_absent,  Statistic::macro_f1};

std::string_view to_string(Statistic s) noexcept;
Statistic parse_statistic(std::string_view text);

// One evaluated token: gold label and predicted label, 1 = present.
struct Item {
  int label = 0;
  int prediction = 0;
};

ConfusionCounts confusion(std::span<const Item> items);

// Point value of a statistic. A ratio with a zero denominator is 0 and sets
// *undefined (when given). F1 is undefined when its precision or recall is,
// or when both are 0; macro F1 is undefined when either class F1 is.
double statistic_value(const ConfusionCounts& c, Statistic s, bool* undefined = nullptr);

struct Metrics {
  std::uint64_t n = 0;
  ConfusionCounts counts;
  std::array<double, 6> value{};
  std::array<bool, 6> undefined{};

  double operator[](Statistic s) const { return value[static_cast<std::size_t>(s)]; }
  bool flagged(Statistic s) const { return undefined[static_cast<std::size_t>(s)]; }
};

// Throws ValidationError when the table is empty.
Metrics metrics(const ConfusionCounts& c);

// ---------------------------------------------------------------------------
// BCa bootstrap

struct BcaOptions {
  double level = 0.95;
  int replicates = 2000;
  std::uint64_t seed = 0;
};

struct Interval {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  int replicates = 0;
  std::uint64_t seed = 0;
  double z0 = 0.0;
  double acceleration = 0.0;
  double alpha_lo = 0.0;  // adjusted quantile levels
  double alpha_hi = 0.0;
  // Endpoints straight from the replicate quantiles, before `extended`.
  double raw_lo = 0.0;
  double raw_hi = 0.0;
  bool degenerate = false;              // every replicate equal: lo = hi = point
  bool acceleration_undefined = false;  // zero jackknife spread: a = 0
  bool extended = false;                // raw interval missed the point; widened to include it
  bool point_undefined = false;         // the statistic itself had a zero denominator
};

// Resample indices of replicate b: n draws with replacement from [0, n).
// Replicate b has its own RNG stream, so replicates can be computed in any
// order or in parallel.
std::vector<std::uint32_t> resample_indices(std::size_t n, std::uint64_t seed, int b);

// Type-7 (linear interpolation) quantile of sorted values.
double quantile_type7(std::span<const double> sorted, double p);

// Core BCa step from precomputed pieces. `replicates` need not be sorted.
// z0 and the acceleration are computed unless forced.
Interval bca_from_replicates(double point, std::vector<double> replicates, std::span<const double> jackknife,
                             double level, std::optional<double> force_z0 = std::nullopt,
                             std::optional<double> force_acceleration = std::nullopt);

// BCa over explicit resample index sets (one vector of n indices per
// replicate).
Interval bca_from_indices(std::span<const Item> items, Statistic stat,
                          std::span<const std::vector<std::uint32_t>> indices, double level);

// Leave-one-out values of the statistic.
std::vector<double> jackknife_values(std::span<const Item> items, Statistic stat);

// Throws ValidationError unless n >= 2, replicates >= 100 and 0 < level < 1.
Interval bca_interval(std::span<const Item> items, Statistic stat, const BcaOptions& options);

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
  Statistic statistic;
  bool undefined = false;
  Interval interval;
};

struct EvalReport {
  std::string model;
  std::optional<std::size_t> train_size;
  std::uint64_t n = 0;
  ConfusionCounts counts;
  BcaOptions options;
  std::vector<MetricReport> metrics;  // in kAllStatistics order

  const MetricReport& at(Statistic s) const;
};

EvalReport evaluate(std::span<const Item> items, const BcaOptions& options, std::string model = {},
                    std::optional<std::size_t> train_size = std::nullopt);

nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// Columns: model,train_size,metric,point,lo,hi. One row per metric.
inline constexpr const char* kCsvHeader = "model,train_size,metric,point,lo,hi";
std::string to_csv_rows(const EvalReport& report);

// Gold tokens with a present/absent label and not excluded, joined by
// token_id with the prediction manifest. The prediction is
// confidence >= threshold when a confidence is present, else the predicted
// record's burst label. Throws ValidationError if a gold token has no
// usable prediction.
std::vector<Item> join_predictions(const dataset::Manifest& gold, const dataset::Manifest& predicted,
                                   double threshold = 0.5);

}  // namespace stopburst::eval
