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
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "analysis_sim.hpp"
#include "doctest.h"
#include "stopburst/analysis.hpp"
#include "stopburst/error.hpp"

using namespace stopburst;
using namespace stopburst::analysis;

namespace {

// Cox-de Boor recursion straight from the definition (0/0 taken as 0).
double bspline(const std::vector<double>& t, int i, int order, double x) {
  if (order == 1) {
    bool last = t[static_cast<std::size_t>(i + 1)] == t.back() && x == t.back() &&
                t[static_cast<std::size_t>(i)] < t[static_cast<std::size_t>(i + 1)];
    return (t[static_cast<std::size_t>(i)] <= x && x < t[static_cast<std::size_t>(i + 1)]) || last ? 1.0 : 0.0;
  }
  double a = 0, b = 0;
  double d1 = t[static_cast<std::size_t>(i + order - 1)] - t[static_cast<std::size_t>(i)];
  double d2 = t[static_cast<std::size_t>(i + order)] - t[static_cast<std::size_t>(i + 1)];
  if (d1 > 0) a = (x - t[static_cast<std::size_t>(i)]) / d1 * bspline(t, i, order - 1, x);
  if (d2 > 0) b = (t[static_cast<std::size_t>(i + order)] - x) / d2 * bspline(t, i + 1, order - 1, x);
  return a + b;
}

using oracle::column;
using oracle::linear_truth;
using oracle::logistic;
using oracle::percentile;
using oracle::simulate;
using oracle::Truth;

}  // namespace

TEST_CASE("B-spline basis matches the recursive definition and sums to one") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> d(0, 1);
  std::vector<double> x(300);
  for (auto& v : x) v = d(gen);
  for (int K : {4, 6, 10, 14}) {
    auto basis = SplineBasis::build(x, K);
    CHECK(basis.knots.size() == static_cast<std::size_t>(K + 4));
    CHECK(std::is_sorted(basis.knots.begin(), basis.knots.end()));
    for (int s = 0; s <= 200; ++s) {
      double xv = basis.lo + (basis.hi - basis.lo) * s / 200.0;
      auto row = basis.row(xv);
      CHECK(row.sum() == doctest::Approx(1.0).epsilon(1e-12));
      for (int i = 0; i < K; ++i) CHECK(row[i] == doctest::Approx(bspline(basis.knots, i, 4, xv)).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(SplineBasis::build(x, 3), ValidationError);
  std::vector<double> same(10, 1.0);
  CHECK_THROWS_AS(SplineBasis::build(same, 10), ValidationError);
}

TEST_CASE("difference penalty leaves constants and linear sequences unpenalized") {
  auto S = difference_penalty(10);
  Eigen::VectorXd c = Eigen::VectorXd::Ones(10), l = Eigen::VectorXd::LinSpaced(10, 0, 9);
  CHECK((S * c).norm() < 1e-12);
  CHECK((S * l).norm() < 1e-12);
  CHECK(S.isApprox(S.transpose()));
}

TEST_CASE("score matches finite differences of the penalized log likelihood") {
  auto rows = simulate(400, {"manual"}, [](auto&, Voicing, double x) { return linear_truth(x); }, 3);
  auto x = column(rows, "manual");
  std::vector<int> y;
  for (const auto& r : rows) y.push_back(r.burst);
  auto basis = SplineBasis::build(x, 10);
  Eigen::MatrixXd X = basis.design(x);
  Eigen::VectorXd yv(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) yv[static_cast<Eigen::Index>(i)] = y[i];
  auto S = difference_penalty(10);
  std::mt19937_64 gen(4);
  std::normal_distribution<double> d(0, 0.8);
  for (double lambda : {0.01, 1.0, 100.0}) {
    Eigen::VectorXd b(10);
    for (auto& v : b) v = d(gen);
    auto score = detail::penalized_score(b, X, yv, S, lambda);
    for (int k = 0; k < 10; ++k) {
      double h = 1e-5;
      Eigen::VectorXd bp = b, bm = b;
      bp[k] += h;
      bm[k] -= h;
      double fd = -(detail::penalized_objective(bp, X, yv, S, lambda) -
                    detail::penalized_objective(bm, X, yv, S, lambda)) /
                  (2 * h);
      CHECK(std::abs(fd - score[k]) <= 1e-6 * std::max(1.0, std::abs(score[k])));
    }
  }
}

TEST_CASE("penalized IRLS deviance is non-increasing and the optimum has zero score") {
  auto rows = simulate(2000, {"manual"}, [](auto&, Voicing, double x) { return linear_truth(x); }, 5);
  auto x = column(rows, "manual");
  std::vector<int> y;
  for (const auto& r : rows) y.push_back(r.burst);
  auto basis = SplineBasis::build(x, 10);
  for (double lambda : FitOptions::default_lambda_grid()) {
    auto g = fit_group(x, y, basis, lambda);
    REQUIRE(g.trace.size() >= 2);
    for (std::size_t i = 1; i < g.trace.size(); ++i) CHECK(g.trace[i] <= g.trace[i - 1]);
    Eigen::MatrixXd X = basis.design(x);
    Eigen::VectorXd yv(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) yv[static_cast<Eigen::Index>(i)] = y[i];
    CHECK(detail::penalized_score(g.coefficients, X, yv, difference_penalty(10), lambda).norm() < 1e-4);
    // Covariance is symmetric positive semi-definite.
    CHECK(g.covariance.isApprox(g.covariance.transpose()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.covariance);
    CHECK(es.eigenvalues().minCoeff() >= 0.0);
    CHECK(g.edf > 1.0);
    CHECK(g.edf <= 10.0 + 1e-9);
  }
}

TEST_CASE("doubling lambda never increases roughness at the optimum") {
  auto rows = simulate(1500, {"manual"}, [](auto&, Voicing, double x) { return logistic(std::sin(3 * x)); }, 6);
  auto x = column(rows, "manual");
  std::vector<int> y;
  for (const auto& r : rows) y.push_back(r.burst);
  auto basis = SplineBasis::build(x, 10);
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda = 0.01; lambda <= 1e4; lambda *= 2) {
    auto g = fit_group(x, y, basis, lambda);
    CHECK(g.roughness <= prev * (1 + 1e-7) + 1e-12);
    prev = g.roughness;
  }
}

TEST_CASE("logistic truth is recovered within 0.05 over the central 90% range") {
  auto rows = simulate(5000, {"manual"}, [](auto&, Voicing, double x) { return linear_truth(x); }, 7);
  auto fit = fit_spline_model(rows);
  auto x = column(rows, "manual");
  double lo = percentile(x, 0.05), hi = percentile(x, 0.95);
  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(lo + (hi - lo) * i / 100.0);
  auto curve = predict_curve(fit, "manual", Voicing::voiceless, grid);
  double worst = 0;
  for (const auto& p : curve) worst = std::max(worst, std::abs(p.probability - linear_truth(p.log_duration)));
  MESSAGE("max abs error " << worst);
  CHECK(worst <= 0.05);
}

TEST_CASE("a constant-outcome group fits near 1 without failing") {
  auto rows = simulate(600, {"manual"},
                       [](auto&, Voicing v, double x) { return v == Voicing::voiced ? 1.0 : linear_truth(x); }, 8,
                       true);
  auto fit = fit_spline_model(rows);
  const auto& g = fit.group("manual", Voicing::voiced);
  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(g.basis.lo + (g.basis.hi - g.basis.lo) * i / 50.0);
  for (const auto& p : predict_curve(fit, "manual", Voicing::voiced, grid)) CHECK(p.probability >= 0.99);

  std::vector<AnalysisRow> all_one = rows;
  for (auto& r : all_one) r.burst = 1;
  CHECK_THROWS_AS(fit_spline_model(all_one), ValidationError);
}

TEST_CASE("fit preconditions") {
  std::vector<AnalysisRow> rows = {{"a", "m", Voicing::voiced, -3, 1}, {"b", "m", Voicing::voiced, -3, 0}};
  CHECK_THROWS_AS(fit_spline_model(rows), ValidationError);  // one distinct duration
  std::vector<AnalysisRow> unpaired = {{"a", "m", Voicing::voiced, -3, 1},
                                       {"b", "m", Voicing::voiced, -2, 0},
                                       {"a", "x", Voicing::voiced, -3, 1}};
  CHECK_THROWS_AS(fit_spline_model(unpaired), ValidationError);
}

TEST_CASE("predict_curve") {
  auto rows = simulate(3000, {"manual"}, [](auto&, Voicing, double x) { return linear_truth(x); }, 9);
  auto fit = fit_spline_model(rows);
  const auto& g = fit.group("manual", Voicing::voiceless);
  std::vector<double> grid;
  for (int i = 0; i <= 60; ++i) grid.push_back(g.basis.lo + (g.basis.hi - g.basis.lo) * i / 60.0);
  auto curve = predict_curve(fit, "manual", Voicing::voiceless, grid);
  std::vector<double> widths;
  for (const auto& p : curve) {
    CHECK(p.probability > 0.0);
    CHECK(p.probability < 1.0);
    CHECK(p.lo <= p.probability);
    CHECK(p.probability <= p.hi);
    CHECK_FALSE(p.extrapolated);
    widths.push_back(p.hi - p.lo);
  }
  std::vector<double> sorted = widths;
  std::sort(sorted.begin(), sorted.end());
  double median = sorted[sorted.size() / 2];
  CHECK(widths.front() >= median);
  CHECK(widths.back() >= median);

  std::vector<double> outside = {g.basis.hi + 1.0};
  CHECK(predict_curve(fit, "manual", Voicing::voiceless, outside)[0].extrapolated);
  CHECK_THROWS_AS(predict_curve(fit, "model", Voicing::voiceless, grid), NotFound);
  CHECK_THROWS_AS(predict_curve(fit, "manual", Voicing::voiced, grid), NotFound);

  SplineFit zero = fit;
  zero.groups[0].coefficients.setZero();
  for (const auto& p : predict_curve(zero, "manual", Voicing::voiceless, grid)) {
    CHECK(p.probability == 0.5);
    CHECK(std::abs((p.hi - 0.5) - (0.5 - p.lo)) < 1e-12);
  }
}

TEST_CASE("shifting log durations leaves fitted curves unchanged") {
  auto rows = simulate(2000, {"manual"}, [](auto&, Voicing, double x) { return linear_truth(x); }, 10);
  auto shifted = rows;
  const double c = 0.75;
  for (auto& r : shifted) r.log_duration += c;
  auto f1 = fit_spline_model(rows);
  auto f2 = fit_spline_model(shifted);
  const auto& g = f1.group("manual", Voicing::voiceless);
  std::vector<double> grid, grid2;
  for (int i = 0; i <= 40; ++i) {
    grid.push_back(g.basis.lo + (g.basis.hi - g.basis.lo) * i / 40.0);
    grid2.push_back(grid.back() + c);
  }
  auto a = predict_curve(f1, "manual", Voicing::voiceless, grid);
  auto b = predict_curve(f2, "manual", Voicing::voiceless, grid2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i].probability - b[i].probability) < 1e-6);
    CHECK(std::abs(a[i].lo - b[i].lo) < 1e-6);
  }
}

TEST_CASE("Holm adjustment") {
  std::vector<double> p = {0.01, 0.04, 0.03, 0.5};
  auto adj = holm_adjust(p);
  CHECK(adj[0] == doctest::Approx(0.04));
  CHECK(adj[2] == doctest::Approx(0.09));
  CHECK(adj[1] == doctest::Approx(0.09));  // max(0.04 * 2, 0.09)
  CHECK(adj[3] == doctest::Approx(0.5));
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(adj[i] >= p[i]);
}

TEST_CASE("contrasts: identical data, self contrast and antisymmetry") {
  auto rows = simulate(2000, {"manual", "model"}, [](auto&, Voicing, double x) { return linear_truth(x); }, 11);
  // Make model an exact copy of manual.
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2) rows[i + 1].burst = rows[i].burst;
  auto fit = fit_spline_model(rows);
  auto c = marginal_contrast(fit, "manual", "model", Voicing::voiceless);
  CHECK(c.delta == 0.0);
  CHECK(c.p_unadjusted == doctest::Approx(1.0));
  auto self = marginal_contrast(fit, "manual", "manual", Voicing::voiceless);
  CHECK(self.delta == 0.0);
  CHECK(self.p_adjusted == 1.0);
  CHECK_THROWS_AS(marginal_contrast(fit, "manual", "nope", Voicing::voiceless), NotFound);

  auto rows2 = simulate(2000, {"a", "b", "c"},
                        [](const std::string& t, Voicing, double x) {
                          return linear_truth(x) * (t == "a" ? 0.9 : t == "b" ? 1.0 : 0.95);
                        },
                        12);
  auto fit2 = fit_spline_model(rows2);
  auto ab = marginal_contrast(fit2, "a", "b", Voicing::voiceless);
  auto ba = marginal_contrast(fit2, "b", "a", Voicing::voiceless);
  CHECK(ab.delta == -ba.delta);
  CHECK(ab.se == doctest::Approx(ba.se));
  CHECK(ab.p_adjusted == doctest::Approx(ba.p_adjusted));
  CHECK(pairwise_contrasts(fit2, Voicing::voiceless).size() == 3);
}

TEST_CASE("a 6-point probability shift is recovered and detected") {
  auto rows = simulate(5000, {"manual", "model"},
                       [](const std::string& t, Voicing, double x) {
                         double p = 0.85 * linear_truth(x);
                         return t == "model" ? p + 0.06 : p;
                       },
                       13);
  auto fit = fit_spline_model(rows);
  auto c = marginal_contrast(fit, "model", "manual", Voicing::voiceless);
  MESSAGE("delta " << c.delta << " se " << c.se << " p_adj " << c.p_adjusted);
  CHECK(std::abs(c.delta - 0.06) <= 0.02);
  CHECK(c.p_adjusted < 0.05);
}

TEST_CASE("deviance test") {
  auto rows = simulate(5000, {"manual", "model"},
                       [](const std::string& t, Voicing, double x) {
                         return t == "manual" ? linear_truth(x) : logistic(0.5 - 1.5 * (x - std::log(0.06)));
                       },
                       14);
  FitOptions full_o, red_o;
  red_o.grouping = Grouping::voicing_only;
  auto full = fit_spline_model(rows, full_o);
  auto reduced = fit_spline_model(rows, red_o);
  auto t = type_smooth_test(rows);
  MESSAGE("chi2 " << t.chi2 << " df " << t.df);
  CHECK(t.p < 0.001);
  CHECK(t.df >= 1);
  // Matched smoothing keeps the common curve inside the full model.
  auto matched = fit_matched_full(rows, reduced);
  CHECK(matched.groups[0].lambda == doctest::Approx(reduced.groups[0].lambda / 2));
  CHECK(matched.deviance <= reduced.deviance);

  auto same = deviance_test(full, full);
  CHECK(same.chi2 == 0.0);
  CHECK(same.p == 1.0);

  CHECK_THROWS_AS(deviance_test(reduced, full), ValidationError);
  auto other = simulate(100, {"manual", "model"}, [](auto&, Voicing, double x) { return linear_truth(x); }, 15);
  CHECK_THROWS_AS(deviance_test(full, fit_spline_model(other, red_o)), ValidationError);
}

TEST_CASE("null deviance-test p-values are uniform (KS, 200 replications)") {
  std::vector<double> ps;
  for (int rep = 0; rep < 200; ++rep) {
    auto rows = simulate(800, {"manual", "model"}, [](auto&, Voicing, double x) { return linear_truth(x); },
                         1000 + static_cast<std::uint64_t>(rep));
    ps.push_back(type_smooth_test(rows).p);
  }
  std::sort(ps.begin(), ps.end());
  double D = 0;
  const double n = static_cast<double>(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    D = std::max({D, static_cast<double>(i + 1) / n - ps[i], ps[i] - static_cast<double>(i) / n});
  }
  // Asymptotic Kolmogorov critical value at alpha = 0.01.
  double critical = 1.6276 / std::sqrt(n);
  MESSAGE("KS D = " << D << " (critical " << critical << ")");
  CHECK(D < critical);
}

TEST_CASE("binned rates and Wilson intervals") {
  auto [lo, hi] = wilson_interval(50, 100);
  double z = 1.959963984540054, nn = 100, p = 0.5;
  double center = (p + z * z / (2 * nn)) / (1 + z * z / nn);
  double half = z / (1 + z * z / nn) * std::sqrt(p * (1 - p) / nn + z * z / (4 * nn * nn));
  CHECK(lo == doctest::Approx(center - half).epsilon(1e-12));
  CHECK(hi == doctest::Approx(center + half).epsilon(1e-12));
  CHECK(lo == doctest::Approx(0.403).epsilon(0.002));
  CHECK(hi == doctest::Approx(0.597).epsilon(0.002));

  std::mt19937_64 gen(16);
  std::normal_distribution<double> d(-3, 0.5);
  std::vector<double> x(1000);
  for (auto& v : x) v = d(gen);
  std::vector<int> ones(1000, 1);
  auto bins = binned_rates(x, ones, 20);
  CHECK(bins.size() == 20);
  for (const auto& b : bins) {
    CHECK(b.rate == 1.0);
    CHECK(b.wilson_hi == 1.0);
    CHECK(b.n == 50);
  }
  for (std::size_t i = 1; i < bins.size(); ++i) {
    CHECK(bins[i].lo >= bins[i - 1].hi);
    CHECK(bins[i].hi >= bins[i].lo);
  }
  std::vector<double> small(5, 0.0);
  std::vector<int> sy(5, 0);
  CHECK_THROWS_AS(binned_rates(small, sy, 20), ValidationError);
}

TEST_CASE("rows from manifests keep tokens usable in every source") {
  auto tok = [](std::string id, Burst b, double dur) {
    StopToken t;
    t.token_id = id;
    t.corpus = "c";
    t.speaker = "s";
    t.audio_path = "a.wav";
    t.phone = "t";
    t.start = 1.0;
    t.end = 1.0 + dur;
    t.burst = b;
    return t;
  };
  dataset::Manifest gold, pred;
  gold.records = {tok("a", Burst::present, 0.05), tok("b", Burst::absent, 0.08), tok("c", Burst::unknown, 0.1)};
  auto pa = tok("a", Burst::present, 0.05);
  pa.label_source = LabelSource::model;
  pa.confidence = 0.2;
  auto pb = tok("b", Burst::absent, 0.08);
  pb.label_source = LabelSource::model;
  pb.confidence = 0.9;
  pred.records = {pb, pa};
  auto rows = rows_from_manifests({{"manual", gold}, {"model", pred}});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].token_id == "a");
  CHECK(rows[0].burst == 1);
  CHECK(rows[1].annotation_type == "model");
  CHECK(rows[1].burst == 0);
  CHECK(rows[3].burst == 1);
  CHECK(rows[2].log_duration == doctest::Approx(std::log(0.08)));
  validate_paired(rows);
}

TEST_CASE("full analysis run and outputs") {
  auto t0 = std::chrono::steady_clock::now();
  auto rows = simulate(11000, {"manual", "model_a", "model_b"},
                       [](const std::string& t, Voicing v, double x) {
                         double base = linear_truth(x) * (v == Voicing::voiced ? 0.9 : 0.8);
                         return t == "manual" ? base : std::min(1.0, base + 0.05);
                       },
                       17, true);
  auto rep = run_analysis(rows);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("analysis of " << rows.size() << " rows in " << secs << " s");
  CHECK(secs < 120);
  CHECK(rep.full.groups.size() == 6);
  CHECK(rep.reduced.groups.size() == 2);
  CHECK(rep.contrasts.size() == 6);
  CHECK(rep.curves.size() == 6);
  auto curves = curves_csv(rep);
  CHECK(curves.rfind("annotation_type,voicing,log_duration,probability,lo,hi,extrapolated\n", 0) == 0);
  CHECK(std::count(curves.begin(), curves.end(), '\n') == 1 + 6 * 50);
  CHECK(std::count(contrasts_csv(rep).begin(), contrasts_csv(rep).end(), '\n') >= 7);
  auto tests = tests_csv(rep);
  CHECK(tests.find("by_type_smooths,") != std::string::npos);
  auto bundle = plot_bundle(rep);
  CHECK(bundle["groups"].size() == 6);
  CHECK(bundle["groups"][0]["bins"].size() == 20);
  // Deterministic.
  CHECK(plot_bundle(run_analysis(rows)).dump() == bundle.dump());
}
