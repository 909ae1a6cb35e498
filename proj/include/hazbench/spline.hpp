#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "binning.hpp"
#include "data.hpp"
#include "formula.hpp"
#include "grid.hpp"

namespace hazbench {

struct SplineBasisSpec {
  std::size_t n_bins = 32;
  std::size_t n_knots = 12;  // distinct knots including both boundary knots
  std::size_t degree = 3;
  std::optional<double> lambda;

  void validate() const {
    if (degree < 1) throw InputError("spline degree must be >= 1");
    if (n_knots < degree + 1) throw InputError("spline needs n_knots >= degree + 1");
    if (n_bins < n_knots) throw InputError("spline needs n_bins >= n_knots");
    if (lambda && !(*lambda >= 0.0)) throw InputError("lambda must be >= 0");
  }
};

struct SplineFit {
  std::vector<double> theta;  // log-hazard spline coefficients (uncentred covariates)
  std::vector<double> beta;
  std::vector<double> beta_se;
  std::vector<std::string> covariate_names;
  std::vector<double> covariate_means;
  double lambda_hat = 0.0;
  int iterations = 0;
  HazardCurve curve_avg;  // hazard for the average-covariate subject, with bounds
};

/// Clamped B-spline basis evaluated at the grid midpoints. Knots are equally
/// spaced from the first to the last midpoint; the basis has
/// n_knots + degree - 1 columns and each row sums to one.
inline Eigen::MatrixXd bspline_basis(const TimeGrid& grid, std::size_t n_knots, std::size_t degree) {
  const std::size_t J = grid.bins();
  const double a = grid.midpoint(0), b = grid.midpoint(J - 1);
  const std::size_t K = n_knots + degree - 1;
  std::vector<double> knots;
  for (std::size_t r = 0; r < degree; ++r) knots.push_back(a);
  for (std::size_t r = 0; r < n_knots; ++r) {
    knots.push_back(r + 1 == n_knots ? b : a + (b - a) * static_cast<double>(r) / static_cast<double>(n_knots - 1));
  }
  for (std::size_t r = 0; r < degree; ++r) knots.push_back(b);

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(K));
  for (std::size_t j = 0; j < J; ++j) {
    const double x = grid.midpoint(j);
    // degree-0 span containing x; the right end belongs to the last span
    std::size_t span = degree;
    while (span + 1 < knots.size() - degree - 1 && x >= knots[span + 1]) ++span;
    std::vector<double> N(degree + 1, 0.0), left(degree + 1), right(degree + 1);
    N[0] = 1.0;
    for (std::size_t d = 1; d <= degree; ++d) {
      left[d] = x - knots[span + 1 - d];
      right[d] = knots[span + d] - x;
      double saved = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        const double den = right[r + 1] + left[d - r];
        const double tmp = den != 0.0 ? N[r] / den : 0.0;
        N[r] = saved + right[r + 1] * tmp;
        saved = left[d - r] * tmp;
      }
      N[d] = saved;
    }
    for (std::size_t r = 0; r <= degree; ++r) {
      B(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(span - degree + r)) = N[r];
    }
  }
  return B;
}

/// D'D for the order-`order` difference matrix D on K coefficients.
inline Eigen::MatrixXd difference_penalty(std::size_t K, std::size_t order = 2) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  for (std::size_t o = 0; o < order && D.rows() > 1; ++o) {
    Eigen::MatrixXd E(D.rows() - 1, D.cols());
    for (Eigen::Index r = 0; r + 1 < D.rows(); ++r) E.row(r) = D.row(r + 1) - D.row(r);
    D = E;
  }
  return D.transpose() * D;
}

namespace detail {

struct PoissonFit {
  Eigen::VectorXd theta;  // basis coefficients for centred covariates
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;  // inverse penalized information
  double loglik = 0.0;
  double penalized = 0.0;
  double log_det = 0.0;  // log |I + lambda P|
  int iterations = 0;
};

/// Penalized Poisson GLM over occupancy cells: d ~ Pois(R exp(B_j theta + x_p' beta)).
/// `X` holds one (centred) covariate row per pattern. Damped Newton, stopped on
/// the Newton decrement and relative log-likelihood change.
inline PoissonFit fit_penalized_poisson(const CellTable& cells, const Eigen::MatrixXd& B, const Eigen::MatrixXd& P,
                                        const Eigen::MatrixXd& X, double lambda, const Eigen::VectorXd* start = nullptr,
                                        int max_iter = 100) {
  const Eigen::Index K = B.cols(), p = X.cols(), dim = K + p;
  const std::size_t J = cells.bins();
  double D = 0.0, R = 0.0;
  for (std::size_t i = 0; i < cells.events.size(); ++i) {
    D += cells.events[i];
    R += cells.exposure[i];
  }
  if (!(R > 0.0)) throw EstimatorError("spline fit: no exposure in any bin");
  if (!(D > 0.0)) throw EstimatorError("spline fit: no events in any bin");

  Eigen::MatrixXd Pfull = Eigen::MatrixXd::Zero(dim, dim);
  Pfull.topLeftCorner(K, K) = P;

  Eigen::VectorXd phi = Eigen::VectorXd::Zero(dim);
  if (start && start->size() == dim) {
    phi = *start;
  } else {
    // partition of unity: a constant theta is a constant log-hazard
    phi.head(K).setConstant(std::log(D / R));
  }

  auto objective = [&](const Eigen::VectorXd& f, double* ll_out) {
    const Eigen::VectorXd eta_t = B * f.head(K);
    double ll = 0.0;
    for (std::size_t q = 0; q < cells.n_patterns(); ++q) {
      const double xb = p ? X.row(static_cast<Eigen::Index>(q)).dot(f.tail(p)) : 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        const double r = cells.R(q, j);
        if (r <= 0.0) continue;
        const double eta = eta_t(static_cast<Eigen::Index>(j)) + xb;
        ll += cells.d(q, j) * eta - r * std::exp(eta);
      }
    }
    if (ll_out) *ll_out = ll;
    return ll - 0.5 * lambda * f.dot(Pfull * f);
  };

  auto derivatives = [&](const Eigen::VectorXd& f, Eigen::VectorXd& g, Eigen::MatrixXd& H) {
    g = -lambda * (Pfull * f);
    H = lambda * Pfull;
    const Eigen::VectorXd eta_t = B * f.head(K);
    Eigen::VectorXd z(dim);
    for (std::size_t q = 0; q < cells.n_patterns(); ++q) {
      const double xb = p ? X.row(static_cast<Eigen::Index>(q)).dot(f.tail(p)) : 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        const double r = cells.R(q, j);
        if (r <= 0.0) continue;
        const double mu = r * std::exp(eta_t(static_cast<Eigen::Index>(j)) + xb);
        z.head(K) = B.row(static_cast<Eigen::Index>(j)).transpose();
        if (p) z.tail(p) = X.row(static_cast<Eigen::Index>(q)).transpose();
        g.noalias() += (cells.d(q, j) - mu) * z;
        H.noalias() += mu * z * z.transpose();
      }
    }
  };

  auto solve = [&](const Eigen::MatrixXd& H, const Eigen::VectorXd& g) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 1e-13 * H.diagonal().maxCoeff()) {
      return Eigen::VectorXd(ldlt.solve(g));
    }
    Eigen::MatrixXd Hr = H;
    Hr.diagonal().array() += 1e-8 * std::max(1.0, H.diagonal().maxCoeff());
    return Eigen::VectorXd(Hr.ldlt().solve(g));
  };

  PoissonFit fit;
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  double ll = 0.0;
  double obj = objective(phi, &ll);
  bool converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    derivatives(phi, g, H);
    const Eigen::VectorXd step = solve(H, g);
    const double decrement = g.dot(step);
    double t = 1.0;
    Eigen::VectorXd next = phi + step;
    double next_ll = 0.0;
    double next_obj = objective(next, &next_ll);
    while (!(std::isfinite(next_obj) && next_obj >= obj - 1e-12 * std::abs(obj)) && t > 1e-10) {
      t *= 0.5;
      next = phi + t * step;
      next_obj = objective(next, &next_ll);
    }
    if (!std::isfinite(next_obj)) break;
    if (next_obj < obj - 1e-12 * std::abs(obj)) {
      // no ascent left at working precision (stiff penalties near the top of the lambda range)
      converged = decrement < 1e-6 * std::max(1.0, std::abs(obj));
      ++it;
      break;
    }
    const double change = std::abs(next_obj - obj) / std::max(1.0, std::abs(obj));
    phi = next;
    obj = next_obj;
    ll = next_ll;
    if (decrement < 1e-12 * std::max(1.0, std::abs(obj)) || (change < 1e-8 && decrement < 1e-8 * std::max(1.0, std::abs(obj)))) {
      converged = true;
      ++it;
      break;
    }
  }
  if (!converged) throw EstimatorError("spline fit did not converge in " + std::to_string(max_iter) + " iterations");
  // one more full Newton step to polish
  derivatives(phi, g, H);
  {
    const Eigen::VectorXd step = solve(H, g);
    double next_ll = 0.0;
    const double next_obj = objective(phi + step, &next_ll);
    if (std::isfinite(next_obj) && next_obj >= obj - 1e-12 * std::abs(obj)) {
      phi += step;
      obj = next_obj;
      ll = next_ll;
      derivatives(phi, g, H);
    }
  }
  fit.theta = phi.head(K);
  fit.beta = phi.tail(p);
  fit.loglik = ll;
  fit.penalized = obj;
  fit.iterations = it;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  fit.log_det = ldlt.vectorD().array().abs().max(1e-300).log().sum();
  Eigen::MatrixXd Hr = H;
  if (!(ldlt.isPositive() && ldlt.vectorD().minCoeff() > 1e-13 * H.diagonal().maxCoeff())) {
    Hr.diagonal().array() += 1e-8 * std::max(1.0, H.diagonal().maxCoeff());
  }
  fit.cov = Hr.ldlt().solve(Eigen::MatrixXd::Identity(dim, dim));
  return fit;
}

/// Approximate restricted likelihood for the smoothing parameter.
inline double reml_score(const PoissonFit& f, double lambda, std::size_t penalty_rank) {
  return f.penalized + 0.5 * static_cast<double>(penalty_rank) * std::log(lambda) - 0.5 * f.log_det;
}

}  // namespace detail

/// Penalized B-spline Poisson hazard with PH covariates.
///
/// Covariates are centred at their subject means for fitting, so curve_avg is
/// the hazard of the average subject. When spec.lambda is unset, log10(lambda)
/// is chosen on [-6, 8] by golden-section search of an approximate REML score.
/// The grid defaults to spec.n_bins equal bins on (0, max time].
inline SplineFit fit_spline_hazard(const SurvDataset& data, const ModelFormula& formula, const SplineBasisSpec& spec,
                                   std::optional<TimeGrid> grid_opt = {}) {
  spec.validate();
  if (!formula.nph_terms.empty()) throw InputError("spline estimator does not support nph() terms");
  if (data.empty()) throw InputError("empty dataset");
  const TimeGrid grid = grid_opt.value_or(TimeGrid::equal_width(0.0, data.max_time(), spec.n_bins));
  if (grid.bins() < spec.n_knots) throw InputError("spline needs n_bins >= n_knots");

  std::vector<std::size_t> cols;
  for (const auto& t : formula.ph_terms) cols.push_back(data.covariate_index(t));
  // strata are irrelevant here; pool them
  const SurvDataset pooled(data.records(), data.covariate_names());
  const CellTable cells = bin_cells(pooled, grid, cols);

  const std::size_t p = cols.size();
  std::vector<double> xbar(p, 0.0);
  for (const auto& r : data.records()) {
    for (std::size_t k = 0; k < p; ++k) xbar[k] += r.covariates[cols[k]];
  }
  for (auto& v : xbar) v /= static_cast<double>(data.size());
  Eigen::MatrixXd X(static_cast<Eigen::Index>(cells.n_patterns()), static_cast<Eigen::Index>(p));
  for (std::size_t q = 0; q < cells.n_patterns(); ++q) {
    for (std::size_t k = 0; k < p; ++k) {
      X(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(k)) = cells.patterns[q][k] - xbar[k];
    }
  }

  const Eigen::MatrixXd B = bspline_basis(grid, spec.n_knots, spec.degree);
  const Eigen::Index K = B.cols();
  const Eigen::MatrixXd P = difference_penalty(static_cast<std::size_t>(K), 2);
  const std::size_t rank = K > 2 ? static_cast<std::size_t>(K - 2) : 0;

  detail::PoissonFit fit;
  double lambda = 0.0;
  if (spec.lambda) {
    lambda = *spec.lambda;
    fit = detail::fit_penalized_poisson(cells, B, P, X, lambda);
  } else {
    Eigen::VectorXd warm;
    auto score = [&](double l10) {
      const double l = std::pow(10.0, l10);
      auto f = detail::fit_penalized_poisson(cells, B, P, X, l, warm.size() ? &warm : nullptr);
      warm.resize(f.theta.size() + f.beta.size());
      warm << f.theta, f.beta;
      return detail::reml_score(f, l, rank);
    };
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = -6.0, b = 8.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = score(c), fd = score(d);
    while (b - a > 1e-3) {
      if (fc >= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - gr * (b - a);
        fc = score(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + gr * (b - a);
        fd = score(d);
      }
    }
    lambda = std::pow(10.0, 0.5 * (a + b));
    fit = detail::fit_penalized_poisson(cells, B, P, X, lambda, warm.size() ? &warm : nullptr);
  }

  SplineFit out;
  out.lambda_hat = lambda;
  out.iterations = fit.iterations;
  out.covariate_names = formula.ph_terms;
  out.covariate_means = xbar;
  double shift = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    out.beta.push_back(fit.beta(static_cast<Eigen::Index>(k)));
    out.beta_se.push_back(std::sqrt(fit.cov(K + static_cast<Eigen::Index>(k), K + static_cast<Eigen::Index>(k))));
    shift += xbar[k] * out.beta.back();
  }
  for (Eigen::Index k = 0; k < K; ++k) out.theta.push_back(fit.theta(k) - shift);

  const std::size_t J = grid.bins();
  std::vector<double> v(J), lo(J), hi(J);
  const Eigen::MatrixXd Vt = fit.cov.topLeftCorner(K, K);
  for (std::size_t j = 0; j < J; ++j) {
    const Eigen::VectorXd bj = B.row(static_cast<Eigen::Index>(j)).transpose();
    const double eta = bj.dot(fit.theta);
    const double se = std::sqrt(std::max(0.0, bj.dot(Vt * bj)));
    v[j] = std::exp(eta);
    lo[j] = std::exp(eta - 1.96 * se);
    hi[j] = std::exp(eta + 1.96 * se);
  }
  out.curve_avg = HazardCurve(grid, std::move(v), CurveKind::hazard);
  out.curve_avg.set_bounds(std::move(lo), std::move(hi));
  return out;
}

/// Baseline (all covariates zero) hazard from the average-subject curve.
inline HazardCurve to_baseline(const SplineFit& fit) {
  double lp = 0.0;
  for (std::size_t k = 0; k < fit.beta.size(); ++k) lp += fit.covariate_means[k] * fit.beta[k];
  const double scale = std::exp(-lp);
  HazardCurve out = fit.curve_avg;
  for (auto& x : out.values) x *= scale;
  for (auto& x : out.lower) x *= scale;
  for (auto& x : out.upper) x *= scale;
  out.notes.push_back("bounds ignore var(beta)");
  return out;
}

}  // namespace hazbench
