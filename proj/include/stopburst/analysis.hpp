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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "stopburst/manifest.hpp"
#include "stopburst/token.hpp"

namespace stopburst::analysis {

// One token as labeled by one annotation source ("manual", a model name...).
struct AnalysisRow {
  std::string token_id;
  std::string annotation_type;
  Voicing voicing = Voicing::voiceless;
  double log_duration = 0.0;  // log seconds
  int burst = 0;              // 1 = present
};

// Rows for every token that is labeled and not excluded in all sources,
// one row per (token, source). Sources are (annotation_type, manifest);
// a model manifest's label is confidence >= threshold when a confidence is
// present, else its burst label.
std::vector<AnalysisRow> rows_from_manifests(const std::vector<std::pair<std::string, dataset::Manifest>>& sources,
                                             double threshold = 0.5);

// Throws ValidationError unless every annotation type covers the same token
// set and every log duration is finite.
void validate_paired(std::span<const AnalysisRow> rows);

// ---------------------------------------------------------------------------
// Cubic B-spline basis

inline constexpr int kSplineOrder = 4;  // cubic

struct SplineBasis {
  int K = 10;                 // number of basis functions
  std::vector<double> knots;  // K + 4 entries, boundary knots repeated
  double lo = 0.0;
  double hi = 0.0;

  // Boundary knots at the range of x, interior knots at evenly spaced
  // type-7 quantiles of the distinct values of x. Needs K >= 4 and two
  // distinct values.
  static SplineBasis build(std::span<const double> x, int K);

  // Basis row at x; x outside [lo, hi] is evaluated at the nearest end.
  Eigen::RowVectorXd row(double x) const;
  Eigen::MatrixXd design(std::span<const double> x) const;
};

// Second-order difference penalty S = D'D (K x K).
Eigen::MatrixXd difference_penalty(int K);

// Ridge added to every fit so separated groups keep a finite optimum.
inline constexpr double kLambdaFloor = 1e-6;

// ---------------------------------------------------------------------------
// Fits

enum class Grouping { type_and_voicing, voicing_only };

struct GroupFit {
  std::string annotation_type;  // "*" when pooled over types
  Voicing voicing = Voicing::voiceless;
  std::size_t n = 0;
  SplineBasis basis;
  Eigen::VectorXd coefficients;  // one per basis function
  Eigen::MatrixXd covariance;    // inverse penalized information
  // Mean fitted linear predictor; the basis sums to one, so the curve is
  // this level plus a centered spline.
  double intercept = 0.0;
  double lambda = 0.0;
  double deviance = 0.0;  // -2 log likelihood
  double edf = 0.0;            // tr(F), F = (X'WX + P)^-1 X'WX
  double edf_reference = 0.0;  // tr(2F - FF), for likelihood-ratio tests
  double gcv = 0.0;
  double roughness = 0.0;  // coefficients' S coefficients
  int iterations = 0;
  // Penalized deviance after every accepted step, starting at the initial
  // point.
  std::vector<double> trace;
};

struct SplineFit {
  int K = 10;
  Grouping grouping = Grouping::type_and_voicing;
  std::vector<GroupFit> groups;
  double deviance = 0.0;
  double edf = 0.0;
  double edf_reference = 0.0;
  std::size_t n = 0;
  // Order-independent digest of the rows, used to check that two fits
  // describe the same data.
  std::uint64_t data_digest = 0;
  std::vector<std::string> annotation_types;
  // Per voicing: observed log durations (one per token), the reference grid
  // for marginal contrasts.
  std::map<Voicing, std::vector<double>> reference;

  // Throws NotFound for an unknown group. With voicing_only grouping any
  // annotation type maps to the pooled group.
  const GroupFit& group(const std::string& annotation_type, Voicing voicing) const;
};

struct FitOptions {
  int K = 10;
  // 10^-2 .. 10^4 by half decades.
  std::vector<double> lambda_grid = default_lambda_grid();
  Grouping grouping = Grouping::type_and_voicing;
  int max_iterations = 200;
  double tolerance = 1e-9;
  // When set for a voicing, every group of that voicing uses this smoothing
  // parameter instead of the GCV search.
  std::map<Voicing, double> fixed_lambda;

  static std::vector<double> default_lambda_grid();
};

// Throws ValidationError when a group has fewer than two distinct durations
// or the outcome is constant over all rows, NonConvergence (message carries
// the deviance trace) when IRLS runs out of iterations.
SplineFit fit_spline_model(std::span<const AnalysisRow> rows, const FitOptions& options = {});

// One group at a fixed smoothing parameter. Exposed for tests and for the
// lambda search.
GroupFit fit_group(std::span<const double> x, std::span<const int> y, const SplineBasis& basis, double lambda,
                   int max_iterations = 200, double tolerance = 1e-9);

// Pieces of the penalized objective
//   f(b) = -loglik(b) + lambda b'Sb + floor |b|^2.
namespace detail {
double penalized_objective(const Eigen::VectorXd& b, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& S, double lambda);
// Gradient of the penalized log likelihood, i.e. -grad f.
Eigen::VectorXd penalized_score(const Eigen::VectorXd& b, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const Eigen::MatrixXd& S, double lambda);
}  // namespace detail

// ---------------------------------------------------------------------------
// Inference

struct CurvePoint {
  double log_duration = 0.0;
  double probability = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double se_link = 0.0;  // standard error of the linear predictor
  bool extrapolated = false;
};

std::vector<CurvePoint> predict_curve(const SplineFit& fit, const std::string& annotation_type, Voicing voicing,
                                      std::span<const double> grid, double level = 0.95);

struct Contrast {
  std::string type_a;
  std::string type_b;
  Voicing voicing = Voicing::voiceless;
  double delta = 0.0;  // mean P(a) - mean P(b) over the reference grid
  double se = 0.0;
  double z = 0.0;
  double p_unadjusted = 1.0;
  double p_adjusted = 1.0;  // Holm over all type pairs of this voicing
};

// Holm step-down adjustment; output in input order.
std::vector<double> holm_adjust(std::span<const double> p);

// All unordered type pairs for one voicing, Holm-adjusted together.
std::vector<Contrast> pairwise_contrasts(const SplineFit& fit, Voicing voicing,
                                         std::optional<std::vector<double>> grid = std::nullopt);

// One pair, adjusted within the family of all pairs of that voicing.
// Defaults to the fit's reference grid.
Contrast marginal_contrast(const SplineFit& fit, const std::string& type_a, const std::string& type_b,
                           Voicing voicing, std::optional<std::vector<double>> grid = std::nullopt);

struct DevianceTest {
  double chi2 = 0.0;
  int df = 0;
  double p = 1.0;
  double edf_full = 0.0;  // reference degrees of freedom of each model
  double edf_reduced = 0.0;
};

// chi2 = deviance(reduced) - deviance(full), df = rounded difference of the
// reference degrees of freedom, p from the chi-square upper tail. Throws
// ValidationError unless the reduced fit's groups are unions of the full
// fit's groups over the same rows.
DevianceTest deviance_test(const SplineFit& full, const SplineFit& reduced);

// Full model refitted with the reduced model's smoothing split evenly
// across annotation types (lambda_pooled / T per group). With that choice the
// common curve is a candidate of the full model at the same total penalty,
// so the deviance difference cannot go negative and its null distribution
// tracks the chi-square reference; GCV-selected lambdas per model do not.
SplineFit fit_matched_full(std::span<const AnalysisRow> rows, const SplineFit& reduced, FitOptions options = {});

// Reduced (pooled by voicing) and matched full fits, then deviance_test.
DevianceTest type_smooth_test(std::span<const AnalysisRow> rows, const FitOptions& options = {});

struct RateBin {
  double lo = 0.0;  // smallest log duration in the bin
  double hi = 0.0;  // largest log duration in the bin
  std::size_t n = 0;
  std::size_t k = 0;
  double rate = 0.0;
  double wilson_lo = 0.0;
  double wilson_hi = 0.0;
};

std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double level = 0.95);

// Equal-count bins by duration. Throws ValidationError when n < n_bins.
std::vector<RateBin> binned_rates(std::span<const double> log_duration, std::span<const int> burst,
                                  int n_bins = 20);

// ---------------------------------------------------------------------------
// Full analysis run

struct AnalysisOptions {
  FitOptions fit;
  int curve_points = 50;
  int n_bins = 20;
  double level = 0.95;
};

struct AnalysisReport {
  SplineFit full;          // GCV per group; curves and contrasts
  SplineFit reduced;       // pooled over annotation types
  SplineFit matched_full;  // full model at the reduced model's smoothing
  DevianceTest test;
  std::vector<Contrast> contrasts;
  struct Curve {
    std::string annotation_type;
    Voicing voicing;
    std::vector<CurvePoint> points;
    std::vector<RateBin> bins;
  };
  std::vector<Curve> curves;
};

AnalysisReport run_analysis(std::span<const AnalysisRow> rows, const AnalysisOptions& options = {});

std::string curves_csv(const AnalysisReport& report);
std::string contrasts_csv(const AnalysisReport& report);
std::string tests_csv(const AnalysisReport& report);
std::string bins_csv(const AnalysisReport& report);
nlohmann::ordered_json plot_bundle(const AnalysisReport& report);

}  // namespace stopburst::analysis
