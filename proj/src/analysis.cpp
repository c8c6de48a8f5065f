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

#include "stopburst/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "stopburst/error.hpp"
#include "stopburst/rng.hpp"

namespace stopburst::analysis {
namespace {

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

double two_sided_p(double z) {
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), std::abs(z)));
}

double quantile7(const std::vector<double>& sorted, double p) {
  double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  auto j = static_cast<std::size_t>(std::floor(h));
  if (j + 1 >= sorted.size()) return sorted.back();
  return sorted[j] + (h - static_cast<double>(j)) * (sorted[j + 1] - sorted[j]);
}

// -loglik for binary outcomes.
double neg_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) s += softplus(eta[i]) - y[i] * eta[i];
  return s;
}

std::string join_trace(const std::vector<double>& trace) {
  std::ostringstream out;
  out.precision(12);
  for (std::size_t i = 0; i < trace.size(); ++i) out << (i ? ", " : "") << trace[i];
  return out.str();
}

std::uint64_t row_digest(std::span<const AnalysisRow> rows) {
  std::uint64_t acc = 0;
  for (const auto& r : rows) {
    std::uint64_t bits;
    std::memcpy(&bits, &r.log_duration, sizeof bits);
    std::uint64_t h = hash_name(r.token_id) ^ splitmix64(hash_name(r.annotation_type)) ^
                      splitmix64(bits + static_cast<std::uint64_t>(r.burst) * 2 +
                                 static_cast<std::uint64_t>(r.voicing == Voicing::voiced));
    acc += splitmix64(h);
  }
  return acc;
}

struct GroupData {
  std::string type;
  Voicing voicing;
  std::vector<double> x;
  std::vector<int> y;
};

// Mean predicted probability over a grid and its gradient in the
// coefficients.
std::pair<double, Eigen::VectorXd> mean_probability(const GroupFit& g, std::span<const double> grid) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(g.coefficients.size());
  double mean = 0.0;
  for (double x : grid) {
    Eigen::RowVectorXd b = g.basis.row(x);
    double p = sigmoid(b.dot(g.coefficients));
    mean += p;
    grad += p * (1.0 - p) * b.transpose();
  }
  double n = static_cast<double>(grid.size());
  return {mean / n, grad / n};
}

std::string voicing_name(Voicing v) { return std::string(to_string(v)); }

}  // namespace

std::vector<AnalysisRow> rows_from_manifests(const std::vector<std::pair<std::string, dataset::Manifest>>& sources,
                                             double threshold) {
  if (sources.empty()) throw ValidationError("no annotation sources");
  std::vector<std::unordered_map<std::string, std::size_t>> indexes;
  for (const auto& [name, m] : sources) indexes.push_back(m.index());
  auto usable = [](const StopToken& t) { return !t.excluded && (t.labeled() || t.confidence.has_value()); };
  std::vector<AnalysisRow> rows;
  for (const auto& t0 : sources.front().second.records) {
    bool everywhere = true;
    for (std::size_t s = 0; s < sources.size() && everywhere; ++s) {
      auto it = indexes[s].find(t0.token_id);
      everywhere = it != indexes[s].end() && usable(sources[s].second.records[it->second]);
    }
    if (!everywhere || t0.duration() <= 0) continue;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const auto& t = sources[s].second.records[indexes[s].at(t0.token_id)];
      AnalysisRow r;
      r.token_id = t0.token_id;
      r.annotation_type = sources[s].first;
      r.voicing = t0.voicing;
      r.log_duration = std::log(t0.duration());
      r.burst = t.confidence ? (*t.confidence >= threshold ? 1 : 0) : (t.burst == Burst::present ? 1 : 0);
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

void validate_paired(std::span<const AnalysisRow> rows) {
  std::map<std::string, std::set<std::string>> tokens;
  for (const auto& r : rows) {
    if (!std::isfinite(r.log_duration)) throw ValidationError("token '" + r.token_id + "' has a non-finite duration");
    if (r.burst != 0 && r.burst != 1) throw ValidationError("token '" + r.token_id + "' has a non-binary outcome");
    if (!tokens[r.annotation_type].insert(r.token_id).second) {
      throw ValidationError("token '" + r.token_id + "' appears twice for annotation type '" + r.annotation_type +
                            "'");
    }
  }
  if (tokens.empty()) return;
  const auto& first = tokens.begin()->second;
  for (const auto& [type, set] : tokens) {
    if (set != first) {
      throw ValidationError("annotation type '" + type + "' covers a different token set than '" +
                            tokens.begin()->first + "'");
    }
  }
}

// ---------------------------------------------------------------------------

SplineBasis SplineBasis::build(std::span<const double> x, int K) {
  if (K < kSplineOrder) throw ValidationError("spline needs K >= 4 basis functions");
  std::vector<double> u(x.begin(), x.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  if (u.size() < 2) throw ValidationError("spline needs at least two distinct durations");
  SplineBasis b;
  b.K = K;
  b.lo = u.front();
  b.hi = u.back();
  b.knots.assign(static_cast<std::size_t>(K + kSplineOrder), 0.0);
  for (int j = 0; j < kSplineOrder; ++j) {
    b.knots[static_cast<std::size_t>(j)] = b.lo;
    b.knots[static_cast<std::size_t>(K + j)] = b.hi;
  }
  const int interior = K - kSplineOrder;
  for (int j = 1; j <= interior; ++j) {
    b.knots[static_cast<std::size_t>(kSplineOrder - 1 + j)] =
        quantile7(u, static_cast<double>(j) / static_cast<double>(interior + 1));
  }
  return b;
}

Eigen::RowVectorXd SplineBasis::row(double x) const {
  constexpr int p = kSplineOrder - 1;
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(K);
  x = std::clamp(x, lo, hi);
  const auto& t = knots;
  // Span i with t[i] <= x < t[i+1], restricted to non-empty spans.
  int i = static_cast<int>(std::upper_bound(t.begin(), t.end(), x) - t.begin()) - 1;
  i = std::clamp(i, p, K - 1);
  while (i > p && t[static_cast<std::size_t>(i)] == t[static_cast<std::size_t>(i + 1)]) --i;
  double N[p + 1], left[p + 1], right[p + 1];
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - t[static_cast<std::size_t>(i + 1 - j)];
    right[j] = t[static_cast<std::size_t>(i + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      double temp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
  for (int r = 0; r <= p; ++r) out[i - p + r] = N[r];
  return out;
}

Eigen::MatrixXd SplineBasis::design(std::span<const double> x) const {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(x.size()), K);
  for (std::size_t i = 0; i < x.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = row(x[i]);
  return X;
}

Eigen::MatrixXd difference_penalty(int K) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(K - 2, K);
  for (int r = 0; r < K - 2; ++r) {
    D(r, r) = 1.0;
    D(r, r + 1) = -2.0;
    D(r, r + 2) = 1.0;
  }
  return D.transpose() * D;
}

std::vector<double> FitOptions::default_lambda_grid() {
  std::vector<double> g;
  for (int k = -4; k <= 8; ++k) g.push_back(std::pow(10.0, k / 2.0));
  return g;
}

namespace detail {

double penalized_objective(const Eigen::VectorXd& b, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& S, double lambda) {
  return neg_loglik(X * b, y) + lambda * b.dot(S * b) + kLambdaFloor * b.squaredNorm();
}

Eigen::VectorXd penalized_score(const Eigen::VectorXd& b, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const Eigen::MatrixXd& S, double lambda) {
  Eigen::VectorXd eta = X * b;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) r[i] = y[i] - sigmoid(eta[i]);
  return X.transpose() * r - 2.0 * lambda * (S * b) - 2.0 * kLambdaFloor * b;
}

}  // namespace detail

GroupFit fit_group(std::span<const double> x, std::span<const int> y, const SplineBasis& basis, double lambda,
                   int max_iterations, double tolerance) {
  if (x.size() != y.size()) throw ValidationError("durations and outcomes differ in length");
  if (x.empty()) throw ValidationError("empty group");
  lambda = std::max(lambda, kLambdaFloor);
  const auto n = static_cast<Eigen::Index>(x.size());
  const int K = basis.K;
  Eigen::MatrixXd X = basis.design(x);
  Eigen::VectorXd yv(n);
  double ybar = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    yv[i] = y[static_cast<std::size_t>(i)];
    ybar += yv[i];
  }
  ybar /= static_cast<double>(n);
  ybar = std::clamp(ybar, 0.5 / static_cast<double>(n), 1.0 - 0.5 / static_cast<double>(n));
  const Eigen::MatrixXd S = difference_penalty(K);
  const Eigen::MatrixXd P = 2.0 * lambda * S + 2.0 * kLambdaFloor * Eigen::MatrixXd::Identity(K, K);

  // Constant start: the basis sums to one.
  Eigen::VectorXd b = Eigen::VectorXd::Constant(K, std::log(ybar / (1.0 - ybar)));
  double f = detail::penalized_objective(b, X, yv, S, lambda);
  GroupFit g;
  g.trace.push_back(2.0 * f);
  bool converged = false;
  Eigen::MatrixXd H;
  for (int it = 1; it <= max_iterations; ++it) {
    Eigen::VectorXd eta = X * b;
    Eigen::VectorXd w(n), r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double p = sigmoid(eta[i]);
      w[i] = p * (1.0 - p);
      r[i] = yv[i] - p;
    }
    H = X.transpose() * w.asDiagonal() * X + P;
    Eigen::VectorXd grad = X.transpose() * r - P * b;
    Eigen::VectorXd step = H.ldlt().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd cand;
    double fc = f;
    bool accepted = false;
    for (int h = 0; h < 50; ++h) {
      cand = b + scale * step;
      fc = detail::penalized_objective(cand, X, yv, S, lambda);
      if (fc <= f) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    g.iterations = it;
    if (!accepted) {
      // No descent left along the Newton direction: at the optimum to
      // rounding.
      converged = true;
      break;
    }
    double change = std::abs(f - fc) / std::max(std::abs(fc), 1e-300);
    b = cand;
    f = fc;
    g.trace.push_back(2.0 * f);
    if (change < tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NonConvergence("penalized IRLS did not converge in " + std::to_string(max_iterations) +
                         " iterations (lambda " + std::to_string(lambda) + "); penalized deviance trace: " +
                         join_trace(g.trace));
  }

  Eigen::VectorXd eta = X * b;
  Eigen::VectorXd w(n);
  double work_rss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = sigmoid(eta[i]);
    w[i] = p * (1.0 - p);
    // W (z - eta)^2 with working response z = eta + (y - p) / W.
    if (w[i] > 0) work_rss += (yv[i] - p) * (yv[i] - p) / w[i];
  }
  Eigen::MatrixXd XtWX = X.transpose() * w.asDiagonal() * X;
  H = XtWX + P;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  g.covariance = ldlt.solve(Eigen::MatrixXd::Identity(K, K));
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose());
  Eigen::MatrixXd F = g.covariance * XtWX;
  g.edf = F.trace();
  g.edf_reference = 2.0 * g.edf - (F * F).trace();
  double nd = static_cast<double>(n);
  double denom = nd - g.edf;
  g.gcv = denom > 0 ? nd * work_rss / (denom * denom) : std::numeric_limits<double>::infinity();
  g.coefficients = b;
  g.basis = basis;
  g.lambda = lambda;
  g.n = x.size();
  g.deviance = 2.0 * neg_loglik(eta, yv);
  g.roughness = b.dot(S * b);
  g.intercept = eta.mean();
  return g;
}

const GroupFit& SplineFit::group(const std::string& annotation_type, Voicing voicing) const {
  for (const auto& g : groups) {
    if (g.voicing != voicing) continue;
    if (grouping == Grouping::voicing_only || g.annotation_type == annotation_type) return g;
  }
  throw NotFound("no fitted group for annotation type '" + annotation_type + "', voicing " +
                 voicing_name(voicing));
}

SplineFit fit_spline_model(std::span<const AnalysisRow> rows, const FitOptions& options) {
  validate_paired(rows);
  if (rows.empty()) throw ValidationError("no rows to fit");
  if (options.lambda_grid.empty()) throw ValidationError("empty smoothing parameter grid");
  bool any0 = false, any1 = false;
  for (const auto& r : rows) (r.burst ? any1 : any0) = true;
  if (!any0 || !any1) throw ValidationError("outcome is constant over all rows; need both burst values");

  SplineFit fit;
  fit.K = options.K;
  fit.grouping = options.grouping;
  fit.n = rows.size();
  fit.data_digest = row_digest(rows);

  std::vector<GroupData> groups;
  std::unordered_set<std::string> seen_types;
  std::map<Voicing, std::unordered_set<std::string>> seen_tokens;
  for (const auto& r : rows) {
    if (seen_types.insert(r.annotation_type).second) fit.annotation_types.push_back(r.annotation_type);
    if (seen_tokens[r.voicing].insert(r.token_id).second) fit.reference[r.voicing].push_back(r.log_duration);
    std::string type = options.grouping == Grouping::voicing_only ? "*" : r.annotation_type;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const GroupData& g) { return g.type == type && g.voicing == r.voicing; });
    if (it == groups.end()) {
      groups.push_back({type, r.voicing, {}, {}});
      it = groups.end() - 1;
    }
    it->x.push_back(r.log_duration);
    it->y.push_back(r.burst);
  }
  std::stable_sort(groups.begin(), groups.end(), [&](const GroupData& a, const GroupData& b) {
    auto rank = [&](const std::string& t) {
      return std::find(fit.annotation_types.begin(), fit.annotation_types.end(), t) - fit.annotation_types.begin();
    };
    if (a.type != b.type) return rank(a.type) < rank(b.type);
    return a.voicing < b.voicing;
  });

  for (const auto& gd : groups) {
    SplineBasis basis;
    try {
      basis = SplineBasis::build(gd.x, options.K);
    } catch (const ValidationError& e) {
      throw ValidationError("group (" + gd.type + ", " + voicing_name(gd.voicing) + "): " + e.what());
    }
    std::optional<GroupFit> best;
    std::string last_failure;
    std::vector<double> grid = options.lambda_grid;
    if (auto it = options.fixed_lambda.find(gd.voicing); it != options.fixed_lambda.end()) grid = {it->second};
    for (double lambda : grid) {
      try {
        GroupFit g = fit_group(gd.x, gd.y, basis, lambda, options.max_iterations, options.tolerance);
        if (!best || g.gcv < best->gcv) best = std::move(g);
      } catch (const NonConvergence& e) {
        last_failure = e.what();
      }
    }
    if (!best) {
      throw NonConvergence("group (" + gd.type + ", " + voicing_name(gd.voicing) + "): " + last_failure);
    }
    best->annotation_type = gd.type;
    best->voicing = gd.voicing;
    fit.deviance += best->deviance;
    fit.edf += best->edf;
    fit.edf_reference += best->edf_reference;
    fit.groups.push_back(std::move(*best));
  }
  return fit;
}

// ---------------------------------------------------------------------------

std::vector<CurvePoint> predict_curve(const SplineFit& fit, const std::string& annotation_type, Voicing voicing,
                                      std::span<const double> grid, double level) {
  if (!(level > 0 && level < 1)) throw ValidationError("confidence level must lie in (0, 1)");
  const GroupFit& g = fit.group(annotation_type, voicing);
  const double z = normal_quantile(0.5 + level / 2.0);
  std::vector<CurvePoint> out;
  out.reserve(grid.size());
  for (double x : grid) {
    Eigen::RowVectorXd b = g.basis.row(x);
    double eta = b.dot(g.coefficients);
    double var = (b * g.covariance * b.transpose())(0, 0);
    CurvePoint c;
    c.log_duration = x;
    c.probability = sigmoid(eta);
    c.se_link = std::sqrt(std::max(var, 0.0));
    c.lo = sigmoid(eta - z * c.se_link);
    c.hi = sigmoid(eta + z * c.se_link);
    c.extrapolated = x < g.basis.lo || x > g.basis.hi;
    out.push_back(c);
  }
  return out;
}

std::vector<double> holm_adjust(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> out(m);
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double adj = std::min(1.0, static_cast<double>(m - j) * p[order[j]]);
    running = std::max(running, adj);
    out[order[j]] = running;
  }
  return out;
}

namespace {

Contrast raw_contrast(const SplineFit& fit, const std::string& a, const std::string& b, Voicing v,
                      std::span<const double> grid) {
  Contrast c;
  c.type_a = a;
  c.type_b = b;
  c.voicing = v;
  if (a == b) return c;
  const GroupFit& ga = fit.group(a, v);
  const GroupFit& gb = fit.group(b, v);
  auto [ma, da] = mean_probability(ga, grid);
  auto [mb, db] = mean_probability(gb, grid);
  c.delta = ma - mb;
  if (&ga == &gb) return c;
  // Groups are fitted independently: the joint covariance is block
  // diagonal.
  double var = da.dot(ga.covariance * da) + db.dot(gb.covariance * db);
  c.se = std::sqrt(std::max(var, 0.0));
  if (c.se > 0) {
    c.z = c.delta / c.se;
    c.p_unadjusted = two_sided_p(c.z);
  } else {
    c.p_unadjusted = c.delta == 0 ? 1.0 : 0.0;
  }
  return c;
}

std::vector<double> grid_or_reference(const SplineFit& fit, Voicing v, std::optional<std::vector<double>> grid) {
  if (grid) {
    if (grid->empty()) throw ValidationError("empty reference grid");
    return std::move(*grid);
  }
  auto it = fit.reference.find(v);
  if (it == fit.reference.end()) throw NotFound("no " + voicing_name(v) + " tokens in the fit");
  return it->second;
}

}  // namespace

std::vector<Contrast> pairwise_contrasts(const SplineFit& fit, Voicing voicing,
                                         std::optional<std::vector<double>> grid) {
  auto ref = grid_or_reference(fit, voicing, std::move(grid));
  std::vector<Contrast> out;
  const auto& types = fit.annotation_types;
  for (std::size_t i = 0; i < types.size(); ++i) {
    for (std::size_t j = i + 1; j < types.size(); ++j) out.push_back(raw_contrast(fit, types[i], types[j], voicing, ref));
  }
  std::vector<double> p;
  for (const auto& c : out) p.push_back(c.p_unadjusted);
  auto adj = holm_adjust(p);
  for (std::size_t k = 0; k < out.size(); ++k) out[k].p_adjusted = adj[k];
  return out;
}

Contrast marginal_contrast(const SplineFit& fit, const std::string& type_a, const std::string& type_b,
                           Voicing voicing, std::optional<std::vector<double>> grid) {
  auto ref = grid_or_reference(fit, voicing, std::move(grid));
  for (const auto& t : {type_a, type_b}) {
    if (std::find(fit.annotation_types.begin(), fit.annotation_types.end(), t) == fit.annotation_types.end()) {
      throw NotFound("annotation type '" + t + "' not in the fit");
    }
  }
  Contrast c = raw_contrast(fit, type_a, type_b, voicing, ref);
  if (type_a == type_b) return c;
  for (const auto& f : pairwise_contrasts(fit, voicing, ref)) {
    if ((f.type_a == type_a && f.type_b == type_b) || (f.type_a == type_b && f.type_b == type_a)) {
      c.p_adjusted = f.p_adjusted;
    }
  }
  return c;
}

DevianceTest deviance_test(const SplineFit& full, const SplineFit& reduced) {
  if (full.data_digest != reduced.data_digest || full.n != reduced.n) {
    throw ValidationError("deviance test needs both models fitted to the same rows");
  }
  if (full.K != reduced.K) throw ValidationError("deviance test needs the same spline basis size in both models");
  if (full.grouping == Grouping::voicing_only && reduced.grouping == Grouping::type_and_voicing) {
    throw ValidationError("reduced model is not nested in the full model");
  }
  DevianceTest t;
  t.edf_full = full.edf_reference;
  t.edf_reduced = reduced.edf_reference;
  t.chi2 = std::max(0.0, reduced.deviance - full.deviance);
  t.df = static_cast<int>(std::lround(t.edf_full - t.edf_reduced));
  if (t.df < 1 || t.chi2 == 0.0) {
    t.df = std::max(t.df, 0);
    t.p = 1.0;
    return t;
  }
  t.p = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(t.df), t.chi2));
  return t;
}

SplineFit fit_matched_full(std::span<const AnalysisRow> rows, const SplineFit& reduced, FitOptions options) {
  if (reduced.grouping != Grouping::voicing_only) throw ValidationError("matched fit needs a pooled reduced model");
  options.grouping = Grouping::type_and_voicing;
  options.K = reduced.K;
  const double types = static_cast<double>(std::max<std::size_t>(reduced.annotation_types.size(), 1));
  options.fixed_lambda.clear();
  for (const auto& g : reduced.groups) options.fixed_lambda[g.voicing] = g.lambda / types;
  return fit_spline_model(rows, options);
}

DevianceTest type_smooth_test(std::span<const AnalysisRow> rows, const FitOptions& options) {
  FitOptions ro = options;
  ro.grouping = Grouping::voicing_only;
  ro.fixed_lambda.clear();
  SplineFit reduced = fit_spline_model(rows, ro);
  return deviance_test(fit_matched_full(rows, reduced, options), reduced);
}

std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double level) {
  if (n == 0) return {0.0, 1.0};
  const double z = normal_quantile(0.5 + level / 2.0);
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(k) / nd;
  const double z2 = z * z;
  const double center = (p + z2 / (2 * nd)) / (1 + z2 / nd);
  const double half = z / (1 + z2 / nd) * std::sqrt(p * (1 - p) / nd + z2 / (4 * nd * nd));
  double lo = std::max(0.0, center - half), hi = std::min(1.0, center + half);
  if (k == 0) lo = 0.0;
  if (k == n) hi = 1.0;
  return {lo, hi};
}

std::vector<RateBin> binned_rates(std::span<const double> log_duration, std::span<const int> burst, int n_bins) {
  if (log_duration.size() != burst.size()) throw ValidationError("durations and outcomes differ in length");
  if (n_bins < 1) throw ValidationError("need at least one bin");
  const std::size_t n = log_duration.size();
  const auto nb = static_cast<std::size_t>(n_bins);
  if (n < nb) {
    throw ValidationError("binned rates need at least " + std::to_string(nb) + " rows, got " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return log_duration[a] < log_duration[b]; });
  std::vector<RateBin> bins;
  for (std::size_t b = 0; b < nb; ++b) {
    std::size_t from = b * n / nb, to = (b + 1) * n / nb;
    RateBin r;
    r.n = to - from;
    r.lo = log_duration[order[from]];
    r.hi = log_duration[order[to - 1]];
    for (std::size_t i = from; i < to; ++i) r.k += burst[order[i]] ? 1 : 0;
    r.rate = static_cast<double>(r.k) / static_cast<double>(r.n);
    std::tie(r.wilson_lo, r.wilson_hi) = wilson_interval(r.k, r.n);
    bins.push_back(r);
  }
  return bins;
}

// ---------------------------------------------------------------------------

AnalysisReport run_analysis(std::span<const AnalysisRow> rows, const AnalysisOptions& options) {
  AnalysisReport rep;
  FitOptions fo = options.fit;
  fo.grouping = Grouping::type_and_voicing;
  rep.full = fit_spline_model(rows, fo);
  fo.grouping = Grouping::voicing_only;
  rep.reduced = fit_spline_model(rows, fo);
  rep.matched_full = fit_matched_full(rows, rep.reduced, options.fit);
  rep.test = deviance_test(rep.matched_full, rep.reduced);
  for (Voicing v : {Voicing::voiced, Voicing::voiceless}) {
    if (!rep.full.reference.count(v)) continue;
    for (auto& c : pairwise_contrasts(rep.full, v)) rep.contrasts.push_back(std::move(c));
  }
  for (const auto& g : rep.full.groups) {
    AnalysisReport::Curve curve{g.annotation_type, g.voicing, {}, {}};
    std::vector<double> grid;
    int m = std::max(options.curve_points, 2);
    for (int i = 0; i < m; ++i) grid.push_back(g.basis.lo + (g.basis.hi - g.basis.lo) * i / (m - 1));
    curve.points = predict_curve(rep.full, g.annotation_type, g.voicing, grid, options.level);
    std::vector<double> x;
    std::vector<int> y;
    for (const auto& r : rows) {
      if (r.annotation_type == g.annotation_type && r.voicing == g.voicing) {
        x.push_back(r.log_duration);
        y.push_back(r.burst);
      }
    }
    curve.bins = binned_rates(x, y, static_cast<int>(std::min<std::size_t>(x.size(), options.n_bins)));
    rep.curves.push_back(std::move(curve));
  }
  return rep;
}

namespace {

std::ostringstream csv_stream() {
  std::ostringstream out;
  out.precision(10);
  return out;
}

}  // namespace

std::string curves_csv(const AnalysisReport& r) {
  auto out = csv_stream();
  out << "annotation_type,voicing,log_duration,probability,lo,hi,extrapolated\n";
  for (const auto& c : r.curves) {
    for (const auto& p : c.points) {
      out << c.annotation_type << ',' << to_string(c.voicing) << ',' << p.log_duration << ',' << p.probability
          << ',' << p.lo << ',' << p.hi << ',' << (p.extrapolated ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

std::string contrasts_csv(const AnalysisReport& r) {
  auto out = csv_stream();
  out << "voicing,type_a,type_b,delta,se,z,p_unadjusted,p_adjusted\n";
  for (const auto& c : r.contrasts) {
    out << to_string(c.voicing) << ',' << c.type_a << ',' << c.type_b << ',' << c.delta << ',' << c.se << ','
        << c.z << ',' << c.p_unadjusted << ',' << c.p_adjusted << '\n';
  }
  return out.str();
}

std::string tests_csv(const AnalysisReport& r) {
  auto out = csv_stream();
  out << "test,chi2,df,p,edf_full,edf_reduced\n";
  out << "by_type_smooths," << r.test.chi2 << ',' << r.test.df << ',' << r.test.p << ',' << r.test.edf_full << ','
      << r.test.edf_reduced << '\n';
  return out.str();
}

std::string bins_csv(const AnalysisReport& r) {
  auto out = csv_stream();
  out << "annotation_type,voicing,lo,hi,n,k,rate,wilson_lo,wilson_hi\n";
  for (const auto& c : r.curves) {
    for (const auto& b : c.bins) {
      out << c.annotation_type << ',' << to_string(c.voicing) << ',' << b.lo << ',' << b.hi << ',' << b.n << ','
          << b.k << ',' << b.rate << ',' << b.wilson_lo << ',' << b.wilson_hi << '\n';
    }
  }
  return out.str();
}

nlohmann::ordered_json plot_bundle(const AnalysisReport& r) {
  using J = nlohmann::ordered_json;
  J j;
  J groups = J::array();
  for (std::size_t i = 0; i < r.curves.size(); ++i) {
    const auto& c = r.curves[i];
    const auto& g = r.full.group(c.annotation_type, c.voicing);
    J e;
    e["annotation_type"] = c.annotation_type;
    e["voicing"] = to_string(c.voicing);
    e["n"] = g.n;
    e["lambda"] = g.lambda;
    e["edf"] = g.edf;
    e["deviance"] = g.deviance;
    e["intercept"] = g.intercept;
    J pts = J::array();
    for (const auto& p : c.points) {
      pts.push_back({{"log_duration", p.log_duration},
                     {"probability", p.probability},
                     {"lo", p.lo},
                     {"hi", p.hi},
                     {"extrapolated", p.extrapolated}});
    }
    e["curve"] = pts;
    J bins = J::array();
    for (const auto& b : c.bins) {
      bins.push_back({{"lo", b.lo},
                      {"hi", b.hi},
                      {"n", b.n},
                      {"k", b.k},
                      {"rate", b.rate},
                      {"wilson_lo", b.wilson_lo},
                      {"wilson_hi", b.wilson_hi}});
    }
    e["bins"] = bins;
    groups.push_back(e);
  }
  j["groups"] = groups;
  J cs = J::array();
  for (const auto& c : r.contrasts) {
    cs.push_back({{"voicing", to_string(c.voicing)},
                  {"type_a", c.type_a},
                  {"type_b", c.type_b},
                  {"delta", c.delta},
                  {"se", c.se},
                  {"z", c.z},
                  {"p_unadjusted", c.p_unadjusted},
                  {"p_adjusted", c.p_adjusted}});
  }
  j["contrasts"] = cs;
  j["deviance_test"] = {{"chi2", r.test.chi2},
                        {"df", r.test.df},
                        {"p", r.test.p},
                        {"edf_full", r.test.edf_full},
                        {"edf_reduced", r.test.edf_reduced}};
  return j;
}

}  // namespace stopburst::analysis
