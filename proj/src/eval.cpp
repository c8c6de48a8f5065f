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

#include "stopburst/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "stopburst/error.hpp"
#include "stopburst/rng.hpp"
#include "stopburst/text_util.hpp"

namespace stopburst::eval {
namespace {

constexpr std::array<std::string_view, 6> kNames = {"accuracy",   "precision", "recall",
                                                    "f1_present", "f1_absent", "macro_f1"};

double ratio(double num, double den, bool& undefined) {
  if (den == 0.0) {
    undefined = true;
    return 0.0;
  }
  return num / den;
}

// F1 of one class from its tp/fp/fn.
double f1(double tp, double fp, double fn, bool& undefined) {
  bool p_undef = false, r_undef = false;
  double p = ratio(tp, tp + fp, p_undef);
  double r = ratio(tp, tp + fn, r_undef);
  if (p_undef || r_undef || p + r == 0.0) {
    undefined = true;
    return 0.0;
  }
  return 2.0 * p * r / (p + r);
}

double phi(double x) { return boost::math::cdf(boost::math::normal_distribution<double>(), x); }

double phi_inv(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

// Cell of an item in the confusion table: 0 tp, 1 fp, 2 fn, 3 tn.
int cell(const Item& it) {
  if (it.prediction == 1) return it.label == 1 ? 0 : 1;
  return it.label == 1 ? 2 : 3;
}

ConfusionCounts from_cells(const std::array<std::uint64_t, 4>& c) { return {c[0], c[1], c[2], c[3]}; }

// Adjusted quantile level for normal quantile z.
double adjusted_level(double z0, double a, double z) {
  double s = z0 + z;
  double den = 1.0 - a * s;
  if (den <= 0.0) return s > 0.0 ? 1.0 : 0.0;
  return phi(z0 + s / den);
}

void check_items(std::span<const Item> items) {
  for (const auto& it : items) {
    if ((it.label != 0 && it.label != 1) || (it.prediction != 0 && it.prediction != 1)) {
      throw ValidationError("labels and predictions must be 0 or 1");
    }
  }
}

}  // namespace

std::string_view to_string(Statistic s) noexcept { return kNames[static_cast<std::size_t>(s)]; }

Statistic parse_statistic(std::string_view text) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == text) return kAllStatistics[i];
  }
  throw ValidationError("unknown metric '" + std::string(text) + "'");
}

ConfusionCounts confusion(std::span<const Item> items) {
  std::array<std::uint64_t, 4> c{};
  for (const auto& it : items) ++c[cell(it)];
  return from_cells(c);
}

double statistic_value(const ConfusionCounts& c, Statistic s, bool* undefined) {
  bool u = false;
  double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  double v = 0.0;
  switch (s) {
    case Statistic::accuracy: v = ratio(tp + tn, tp + fp + fn + tn, u); break;
    case Statistic::precision: v = ratio(tp, tp + fp, u); break;
    case Statistic::recall: v = ratio(tp, tp + fn, u); break;
    case Statistic::f1_present: v = f1(tp, fp, fn, u); break;
    // For the absent class, tn plays the role of tp.
    case Statistic::f1_absent: v = f1(tn, fn, fp, u); break;
    case Statistic::macro_f1: {
      bool u1 = false, u2 = false;
      v = 0.5 * (f1(tp, fp, fn, u1) + f1(tn, fn, fp, u2));
      u = u1 || u2;
      break;
    }
  }
  if (undefined) *undefined = u;
  return v;
}

Metrics metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValidationError("cannot compute metrics on zero items");
  Metrics m;
  m.n = c.total();
  m.counts = c;
  for (std::size_t i = 0; i < kAllStatistics.size(); ++i) {
    bool u = false;
    m.value[i] = statistic_value(c, kAllStatistics[i], &u);
    m.undefined[i] = u;
  }
  return m;
}

std::vector<std::uint32_t> resample_indices(std::size_t n, std::uint64_t seed, int b) {
  CounterRng rng(seed, "bootstrap/" + std::to_string(b));
  std::vector<std::uint32_t> idx(n);
  for (auto& v : idx) v = static_cast<std::uint32_t>(rng.below(n));
  return idx;
}

double quantile_type7(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  p = std::clamp(p, 0.0, 1.0);
  double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

Interval bca_from_replicates(double point, std::vector<double> replicates, std::span<const double> jackknife,
                             double level, std::optional<double> force_z0,
                             std::optional<double> force_acceleration) {
  if (replicates.empty()) throw ValidationError("no bootstrap replicates");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
  std::sort(replicates.begin(), replicates.end());
  Interval iv;
  iv.point = point;
  iv.level = level;
  iv.replicates = static_cast<int>(replicates.size());
  const double B = static_cast<double>(replicates.size());

  if (replicates.front() == replicates.back()) {
    iv.degenerate = true;
    iv.lo = iv.hi = iv.raw_lo = iv.raw_hi = point;
    iv.alpha_lo = (1.0 - level) / 2.0;
    iv.alpha_hi = 1.0 - iv.alpha_lo;
    return iv;
  }

  if (force_z0) {
    iv.z0 = *force_z0;
  } else {
    auto below = std::lower_bound(replicates.begin(), replicates.end(), point) - replicates.begin();
    auto upto = std::upper_bound(replicates.begin(), replicates.end(), point) - replicates.begin();
    double prop = (static_cast<double>(below) + 0.5 * static_cast<double>(upto - below)) / B;
    // Every replicate on one side of the point would give an infinite bias
    // correction; hold it half a replicate inside the range instead.
    prop = std::clamp(prop, 0.5 / B, 1.0 - 0.5 / B);
    iv.z0 = phi_inv(prop);
  }

  if (force_acceleration) {
    iv.acceleration = *force_acceleration;
  } else {
    double mean = 0.0;
    for (double v : jackknife) mean += v;
    mean /= static_cast<double>(std::max<std::size_t>(jackknife.size(), 1));
    double num = 0.0, den = 0.0;
    for (double v : jackknife) {
      double d = mean - v;
      num += d * d * d;
      den += d * d;
    }
    if (jackknife.empty() || den == 0.0) {
      iv.acceleration = 0.0;
      iv.acceleration_undefined = true;
    } else {
      iv.acceleration = num / (6.0 * std::pow(den, 1.5));
    }
  }

  double alpha = (1.0 - level) / 2.0;
  iv.alpha_lo = adjusted_level(iv.z0, iv.acceleration, phi_inv(alpha));
  iv.alpha_hi = adjusted_level(iv.z0, iv.acceleration, phi_inv(1.0 - alpha));
  iv.raw_lo = quantile_type7(replicates, iv.alpha_lo);
  iv.raw_hi = quantile_type7(replicates, iv.alpha_hi);
  iv.lo = iv.raw_lo;
  iv.hi = iv.raw_hi;
  if (point < iv.lo || point > iv.hi) {
    iv.extended = true;
    iv.lo = std::min(iv.lo, point);
    iv.hi = std::max(iv.hi, point);
  }
  return iv;
}

std::vector<double> jackknife_values(std::span<const Item> items, Statistic stat) {
  auto total = confusion(items);
  std::array<std::uint64_t, 4> base = {total.tp, total.fp, total.fn, total.tn};
  // Leaving out an item only depends on its cell.
  std::array<double, 4> by_cell{};
  for (int k = 0; k < 4; ++k) {
    if (base[k] == 0) continue;
    auto c = base;
    --c[k];
    by_cell[k] = statistic_value(from_cells(c), stat);
  }
  std::vector<double> out(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) out[i] = by_cell[cell(items[i])];
  return out;
}

Interval bca_from_indices(std::span<const Item> items, Statistic stat,
                          std::span<const std::vector<std::uint32_t>> indices, double level) {
  check_items(items);
  bool undefined = false;
  double point = statistic_value(confusion(items), stat, &undefined);
  std::vector<int> cells(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) cells[i] = cell(items[i]);
  std::vector<double> reps;
  reps.reserve(indices.size());
  for (const auto& idx : indices) {
    std::array<std::uint64_t, 4> c{};
    for (auto j : idx) {
      if (j >= items.size()) throw OutOfRange("resample index out of range");
      ++c[cells[j]];
    }
    reps.push_back(statistic_value(from_cells(c), stat));
  }
  auto jack = jackknife_values(items, stat);
  Interval iv = bca_from_replicates(point, std::move(reps), jack, level);
  iv.point_undefined = undefined;
  return iv;
}

Interval bca_interval(std::span<const Item> items, Statistic stat, const BcaOptions& options) {
  if (items.size() < 2) throw ValidationError("bootstrap needs at least 2 items, got " + std::to_string(items.size()));
  if (options.replicates < 100) {
    throw ValidationError("bootstrap needs at least 100 replicates, got " + std::to_string(options.replicates));
  }
  if (!(options.level > 0.0 && options.level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
  check_items(items);
  const std::size_t n = items.size();
  std::vector<int> cells(n);
  for (std::size_t i = 0; i < n; ++i) cells[i] = cell(items[i]);
  std::vector<double> reps(static_cast<std::size_t>(options.replicates));
  for (int b = 0; b < options.replicates; ++b) {
    CounterRng rng(options.seed, "bootstrap/" + std::to_string(b));
    std::array<std::uint64_t, 4> c{};
    for (std::size_t k = 0; k < n; ++k) ++c[cells[rng.below(n)]];
    reps[static_cast<std::size_t>(b)] = statistic_value(from_cells(c), stat);
  }
  bool undefined = false;
  double point = statistic_value(confusion(items), stat, &undefined);
  auto jack = jackknife_values(items, stat);
  Interval iv = bca_from_replicates(point, std::move(reps), jack, options.level);
  iv.seed = options.seed;
  iv.point_undefined = undefined;
  return iv;
}

const MetricReport& EvalReport::at(Statistic s) const {
  for (const auto& m : metrics) {
    if (m.statistic == s) return m;
  }
  throw NotFound("metric '" + std::string(to_string(s)) + "' not in report");
}

EvalReport evaluate(std::span<const Item> items, const BcaOptions& options, std::string model,
                    std::optional<std::size_t> train_size) {
  EvalReport r;
  r.model = std::move(model);
  r.train_size = train_size;
  r.n = items.size();
  r.counts = confusion(items);
  r.options = options;
  for (auto s : kAllStatistics) {
    MetricReport m;
    m.statistic = s;
    m.interval = bca_interval(items, s, options);
    m.undefined = m.interval.point_undefined;
    r.metrics.push_back(m);
  }
  return r;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["train_size"] = r.train_size ? nlohmann::ordered_json(*r.train_size) : nlohmann::ordered_json(nullptr);
  j["n"] = r.n;
  j["counts"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}};
  j["level"] = r.options.level;
  j["B"] = r.options.replicates;
  j["seed"] = r.options.seed;
  nlohmann::ordered_json ms = nlohmann::ordered_json::object();
  for (const auto& m : r.metrics) {
    const auto& iv = m.interval;
    nlohmann::ordered_json e;
    e["point"] = iv.point;
    e["lo"] = iv.lo;
    e["hi"] = iv.hi;
    e["level"] = iv.level;
    e["B"] = iv.replicates;
    e["seed"] = iv.seed;
    e["z0"] = iv.z0;
    e["a"] = iv.acceleration;
    e["alpha_lo"] = iv.alpha_lo;
    e["alpha_hi"] = iv.alpha_hi;
    e["raw_lo"] = iv.raw_lo;
    e["raw_hi"] = iv.raw_hi;
    nlohmann::ordered_json flags = nlohmann::ordered_json::array();
    if (m.undefined) flags.push_back("undefined");
    if (iv.degenerate) flags.push_back("degenerate");
    if (iv.acceleration_undefined) flags.push_back("acceleration_undefined");
    if (iv.extended) flags.push_back("extended");
    e["flags"] = flags;
    ms[std::string(to_string(m.statistic))] = e;
  }
  j["metrics"] = ms;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.model = j.value("model", "");
    if (j.contains("train_size") && !j["train_size"].is_null()) r.train_size = j["train_size"].get<std::size_t>();
    r.n = j.at("n").get<std::uint64_t>();
    const auto& c = j.at("counts");
    r.counts = {c.at("tp").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(), c.at("fn").get<std::uint64_t>(),
                c.at("tn").get<std::uint64_t>()};
    r.options.level = j.at("level").get<double>();
    r.options.replicates = j.at("B").get<int>();
    r.options.seed = j.at("seed").get<std::uint64_t>();
    for (auto s : kAllStatistics) {
      auto it = j.at("metrics").find(std::string(to_string(s)));
      if (it == j.at("metrics").end()) continue;
      const auto& e = *it;
      MetricReport m;
      m.statistic = s;
      auto& iv = m.interval;
      iv.point = e.at("point").get<double>();
      iv.lo = e.at("lo").get<double>();
      iv.hi = e.at("hi").get<double>();
      iv.level = e.at("level").get<double>();
      iv.replicates = e.at("B").get<int>();
      iv.seed = e.at("seed").get<std::uint64_t>();
      iv.z0 = e.at("z0").get<double>();
      iv.acceleration = e.at("a").get<double>();
      iv.alpha_lo = e.at("alpha_lo").get<double>();
      iv.alpha_hi = e.at("alpha_hi").get<double>();
      iv.raw_lo = e.at("raw_lo").get<double>();
      iv.raw_hi = e.at("raw_hi").get<double>();
      for (const auto& f : e.at("flags")) {
        auto name = f.get<std::string>();
        if (name == "undefined") m.undefined = iv.point_undefined = true;
        else if (name == "degenerate") iv.degenerate = true;
        else if (name == "acceleration_undefined") iv.acceleration_undefined = true;
        else if (name == "extended") iv.extended = true;
      }
      r.metrics.push_back(m);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed evaluation report: ") + e.what());
  }
}

std::string to_csv_rows(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  std::string model = r.model;
  if (model.find_first_of(",\"\n") != std::string::npos) {
    std::string q = "\"";
    for (char ch : model) {
      if (ch == '"') q += '"';
      q += ch;
    }
    model = q + "\"";
  }
  for (const auto& m : r.metrics) {
    out << model << ',' << (r.train_size ? std::to_string(*r.train_size) : std::string()) << ','
        << to_string(m.statistic) << ',' << m.interval.point << ',' << m.interval.lo << ',' << m.interval.hi
        << '\n';
  }
  return out.str();
}

std::vector<Item> join_predictions(const dataset::Manifest& gold, const dataset::Manifest& predicted,
                                   double threshold) {
  auto index = predicted.index();
  std::vector<Item> items;
  for (const auto& g : gold.records) {
    if (g.excluded || !g.labeled()) continue;
    auto it = index.find(g.token_id);
    if (it == index.end()) throw ValidationError("no prediction for gold token '" + g.token_id + "'");
    const auto& p = predicted.records[it->second];
    int pred;
    if (p.confidence) {
      pred = *p.confidence >= threshold ? 1 : 0;
    } else if (p.labeled()) {
      pred = p.burst == Burst::present ? 1 : 0;
    } else {
      throw ValidationError("prediction for token '" + g.token_id + "' has neither confidence nor label");
    }
    items.push_back({g.burst == Burst::present ? 1 : 0, pred});
  }
  return items;
}

}  // namespace stopburst::eval
