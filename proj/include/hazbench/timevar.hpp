#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "data.hpp"
#include "formula.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace hazbench {

/// Interval rates of one effect and their running Delta-weighted sums.
struct CumulativeEffect {
  std::string name;
  std::vector<double> rate;      // per interval
  std::vector<double> rate_var;  // per interval
  std::vector<double> cum;       // at interval right edges; 0 at the start
  std::vector<double> cum_var;

  /// Piecewise-linear cumulative value at t (0 at grid start).
  double at(const TimeGrid& g, double t) const {
    if (t <= g.start()) return 0.0;
    double prev = 0.0;
    for (std::size_t j = 0; j < g.bins(); ++j) {
      if (t <= g.upper(j)) return prev + rate[j] * (t - g.lower(j));
      prev = cum[j];
    }
    return cum.back();
  }
};

struct TVCoxFit {
  TimeGrid grid;  // estimation intervals after merging, spanning [start, stop]
  double start = 0.0, stop = 0.0;
  CumulativeEffect A0;              // cumulative log-baseline intercept
  std::vector<CumulativeEffect> B;  // one per nph term
  std::vector<std::string> gamma_names;
  std::vector<double> gamma;
  Eigen::MatrixXd gamma_cov;
  std::vector<double> gamma_robust_se;
  std::vector<std::string> notes;
  int iterations = 0;

  // for resampling
  Eigen::MatrixXd info_inv;        // inverse observed information, all parameters
  Eigen::MatrixXd subject_scores;  // n x dim score contributions at the estimate
};

namespace detail {

/// Edges of the estimation intervals: grid edges strictly inside the range
/// plus the range ends.
inline std::vector<double> range_edges(const TimeGrid& grid, double start, double stop) {
  std::vector<double> e{start};
  for (double x : grid.edges()) {
    if (x > start && x < stop) e.push_back(x);
  }
  e.push_back(stop);
  return e;
}

}  // namespace detail

/// Multiplicative hazard with time-varying effects for nph() terms and
/// constant effects for the others, as a piecewise-exponential model:
/// log hazard = alpha_j + sum_q beta_qj x_q + gamma'z on interval j.
///
/// Intervals lacking exposure or events overall, or lacking events at either
/// level of an nph indicator, are merged into their right neighbour (the last
/// into its left) with a note. The range defaults to [first event, last event];
/// events in [lo, hi] count, one at lo belonging to the first interval.
inline TVCoxFit fit_timevar(const SurvDataset& data, const ModelFormula& formula, const TimeGrid& grid,
                            std::optional<TimeRange> range = {}, int max_iter = 100) {
  if (data.empty()) throw InputError("empty dataset");
  std::vector<std::size_t> xcols, zcols;
  for (const auto& t : formula.nph_terms) xcols.push_back(data.covariate_index(t));
  for (const auto& t : formula.ph_terms) zcols.push_back(data.covariate_index(t));
  for (std::size_t q = 0; q < xcols.size(); ++q) {
    for (const auto& r : data.records()) {
      const double v = r.covariates[xcols[q]];
      if (v != 0.0 && v != 1.0) {
        throw InputError("nph term '" + formula.nph_terms[q] + "' must be a 0/1 indicator; expand factors first");
      }
    }
  }
  double first = INFINITY, last = -INFINITY;
  for (const auto& r : data.records()) {
    if (r.event) {
      first = std::min(first, r.time);
      last = std::max(last, r.time);
    }
  }
  if (!std::isfinite(first)) throw EstimatorError("timevar: no events");
  TimeRange rg = range.value_or(TimeRange{first, last});
  if (!(rg.hi > rg.lo)) throw InputError("timevar: empty time range");
  if (rg.lo < grid.start() || rg.hi > grid.stop()) throw InputError("timevar: grid does not cover the range");

  const std::size_t Q = xcols.size(), P = zcols.size(), n = data.size();
  TVCoxFit fit;
  fit.start = rg.lo;
  fit.stop = rg.hi;
  std::vector<double> edges = detail::range_edges(grid, rg.lo, rg.hi);

  // per-subject interval of exit (events outside the range do not count)
  auto build_cells = [&](const std::vector<double>& e, std::vector<std::vector<std::pair<std::size_t, double>>>& expo,
                         std::vector<long>& ev_interval) {
    const std::size_t J = e.size() - 1;
    expo.assign(n, {});
    ev_interval.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = data[i];
      for (std::size_t j = 0; j < J; ++j) {
        const double o = std::max(0.0, std::min(r.time, e[j + 1]) - e[j]);
        if (o > 0.0) expo[i].push_back({j, o});
      }
      if (r.event && r.time >= e.front() && r.time <= e.back()) {
        std::size_t j = 0;
        while (j + 1 < J && r.time > e[j + 1]) ++j;
        ev_interval[i] = static_cast<long>(j);
      }
    }
  };

  std::vector<std::vector<std::pair<std::size_t, double>>> expo;
  std::vector<long> evj;
  for (;;) {
    build_cells(edges, expo, evj);
    const std::size_t J = edges.size() - 1;
    std::vector<double> R(J, 0.0), D(J, 0.0);
    std::vector<double> D1(J * std::max<std::size_t>(Q, 1), 0.0), D0(D1.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto [j, o] : expo[i]) R[j] += o;
      if (evj[i] >= 0) {
        const auto j = static_cast<std::size_t>(evj[i]);
        D[j] += 1.0;
        for (std::size_t q = 0; q < Q; ++q) (data[i].covariates[xcols[q]] != 0.0 ? D1 : D0)[q * J + j] += 1.0;
      }
    }
    std::optional<std::size_t> bad;
    for (std::size_t j = 0; j < J && !bad; ++j) {
      if (!(R[j] > 0.0) || D[j] == 0.0) bad = j;
      for (std::size_t q = 0; q < Q && !bad; ++q) {
        if (D1[q * J + j] == 0.0 || D0[q * J + j] == 0.0) bad = j;
      }
    }
    if (!bad) break;
    if (J == 1) throw EstimatorError("timevar: no identifiable interval (each nph level needs events)");
    const std::size_t j = *bad;
    // drop the edge shared with the right neighbour, or the left one for the last interval
    const std::size_t drop = j + 1 < J ? j + 1 : j;
    fit.notes.push_back("warning: interval (" + format_double(edges[j]) + ", " + format_double(edges[j + 1]) +
                        "] merged with a neighbour (no exposure or events)");
    edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  fit.grid = TimeGrid(edges);
  const std::size_t J = edges.size() - 1;
  const std::size_t dim = J * (1 + Q) + P;

  // design index helpers: alpha_j, beta_qj, gamma_k
  auto ia = [&](std::size_t j) { return j; };
  auto ib = [&](std::size_t q, std::size_t j) { return J + q * J + j; };
  auto ig = [&](std::size_t k) { return J * (1 + Q) + k; };

  std::vector<std::vector<double>> X(n), Z(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto c : xcols) X[i].push_back(data[i].covariates[c]);
    for (auto c : zcols) Z[i].push_back(data[i].covariates[c]);
  }

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  {
    std::vector<double> R(J, 0.0), D(J, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto [j, o] : expo[i]) R[j] += o;
      if (evj[i] >= 0) D[static_cast<std::size_t>(evj[i])] += 1.0;
    }
    for (std::size_t j = 0; j < J; ++j) theta(static_cast<Eigen::Index>(ia(j))) = std::log(D[j] / R[j]);
  }

  auto eta = [&](const Eigen::VectorXd& th, std::size_t i, std::size_t j) {
    double v = th(static_cast<Eigen::Index>(ia(j)));
    for (std::size_t q = 0; q < Q; ++q) v += th(static_cast<Eigen::Index>(ib(q, j))) * X[i][q];
    for (std::size_t k = 0; k < P; ++k) v += th(static_cast<Eigen::Index>(ig(k))) * Z[i][k];
    return v;
  };
  auto loglik = [&](const Eigen::VectorXd& th) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (auto [j, o] : expo[i]) ll -= o * std::exp(eta(th, i, j));
      if (evj[i] >= 0) ll += eta(th, i, static_cast<std::size_t>(evj[i]));
    }
    return ll;
  };
  // subject score contributions and the observed information
  auto derivs = [&](const Eigen::VectorXd& th, Eigen::MatrixXd* scores, Eigen::VectorXd& g, Eigen::MatrixXd& H) {
    g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    if (scores) *scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    std::vector<std::pair<std::size_t, double>> z;
    for (std::size_t i = 0; i < n; ++i) {
      auto design = [&](std::size_t j) {
        z.clear();
        z.push_back({ia(j), 1.0});
        for (std::size_t q = 0; q < Q; ++q) {
          if (X[i][q] != 0.0) z.push_back({ib(q, j), X[i][q]});
        }
        for (std::size_t k = 0; k < P; ++k) z.push_back({ig(k), Z[i][k]});
      };
      for (auto [j, o] : expo[i]) {
        const double mu = o * std::exp(eta(th, i, j));
        design(j);
        for (auto [a, va] : z) {
          g(static_cast<Eigen::Index>(a)) -= mu * va;
          if (scores) (*scores)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) -= mu * va;
          for (auto [b, vb] : z) H(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += mu * va * vb;
        }
      }
      // the event term, separate because an event at the range start has no exposure cell
      if (evj[i] >= 0) {
        design(static_cast<std::size_t>(evj[i]));
        for (auto [a, va] : z) {
          g(static_cast<Eigen::Index>(a)) += va;
          if (scores) (*scores)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) += va;
        }
      }
    }
  };

  auto solve = [&](const Eigen::MatrixXd& H, const Eigen::VectorXd& g) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 1e-12 * H.diagonal().maxCoeff()) {
      return Eigen::VectorXd(ldlt.solve(g));
    }
    Eigen::MatrixXd Hr = H;
    Hr.diagonal().array() += 1e-8 * std::max(1.0, H.diagonal().maxCoeff());
    return Eigen::VectorXd(Hr.ldlt().solve(g));
  };

  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  double ll = loglik(theta);
  bool converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    derivs(theta, nullptr, g, H);
    const Eigen::VectorXd step = solve(H, g);
    const double decrement = g.dot(step);
    if (decrement < 1e-14 * std::max(1.0, std::abs(ll))) {
      converged = true;
      break;
    }
    double t = 1.0;
    Eigen::VectorXd next = theta + step;
    double nll = loglik(next);
    while (!(std::isfinite(nll) && nll >= ll - 1e-12 * std::abs(ll)) && t > 1e-10) {
      t *= 0.5;
      next = theta + t * step;
      nll = loglik(next);
    }
    if (!std::isfinite(nll)) break;
    theta = next;
    ll = nll;
  }
  if (!converged) throw EstimatorError("timevar fit did not converge in " + std::to_string(max_iter) + " iterations");
  fit.iterations = it;

  Eigen::MatrixXd scores;
  derivs(theta, &scores, g, H);
  fit.info_inv = H.ldlt().solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
  fit.subject_scores = scores;

  auto effect = [&](const std::string& name, auto index) {
    CumulativeEffect e;
    e.name = name;
    double c = 0.0, v = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      const auto k = static_cast<Eigen::Index>(index(j));
      const double w = fit.grid.width(j);
      e.rate.push_back(theta(k));
      e.rate_var.push_back(fit.info_inv(k, k));
      c += theta(k) * w;
      v += fit.info_inv(k, k) * w * w;
      e.cum.push_back(c);
      e.cum_var.push_back(v);
    }
    return e;
  };
  fit.A0 = effect("(Intercept)", ia);
  for (std::size_t q = 0; q < Q; ++q) {
    fit.B.push_back(effect(formula.nph_terms[q], [&](std::size_t j) { return ib(q, j); }));
  }
  const Eigen::MatrixXd meat = scores.transpose() * scores;
  const Eigen::MatrixXd sandwich = fit.info_inv * meat * fit.info_inv;
  fit.gamma_cov = Eigen::MatrixXd(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
  for (std::size_t k = 0; k < P; ++k) {
    fit.gamma_names.push_back(formula.ph_terms[k]);
    fit.gamma.push_back(theta(static_cast<Eigen::Index>(ig(k))));
    fit.gamma_robust_se.push_back(std::sqrt(sandwich(static_cast<Eigen::Index>(ig(k)), static_cast<Eigen::Index>(ig(k)))));
    for (std::size_t l = 0; l < P; ++l) {
      fit.gamma_cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) =
          fit.info_inv(static_cast<Eigen::Index>(ig(k)), static_cast<Eigen::Index>(ig(l)));
    }
  }
  return fit;
}

struct SmootherSpec {
  double b = 0.0;
  std::vector<double> pred_times;
};

struct DecumulatedCurve {
  std::string name;
  HazardCurve curve;  // per pred-time interval; bounds approximate
};

struct Decumulated {
  HazardCurve baseline;  // exp of the smoothed intercept rate
  std::vector<DecumulatedCurve> effects;
  std::vector<std::string> notes;
};

/// Local-linear (Epanechnikov) smooth of a piecewise-linear cumulative function
/// given at `knots`, evaluated at `at`. Points whose window holds fewer than
/// two knots, and every point when b <= 0, use linear interpolation instead.
inline std::vector<double> smooth_cumulative(const std::vector<double>& knots, const std::vector<double>& values,
                                             double b, const std::vector<double>& at, bool* fell_back = nullptr) {
  std::vector<double> out(at.size());
  auto interp = [&](double s) {
    if (s <= knots.front()) return values.front();
    for (std::size_t k = 1; k < knots.size(); ++k) {
      if (s <= knots[k]) {
        const double w = (s - knots[k - 1]) / (knots[k] - knots[k - 1]);
        return values[k - 1] + w * (values[k] - values[k - 1]);
      }
    }
    return values.back();
  };
  for (std::size_t m = 0; m < at.size(); ++m) {
    const double s = at[m];
    if (b <= 0.0) {
      out[m] = interp(s);
      continue;
    }
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
    std::size_t inside = 0;
    for (std::size_t k = 0; k < knots.size(); ++k) {
      const double u = (knots[k] - s) / b;
      if (std::abs(u) >= 1.0) continue;
      const double w = 0.75 * (1.0 - u * u);
      const double dx = knots[k] - s;
      s0 += w;
      s1 += w * dx;
      s2 += w * dx * dx;
      t0 += w * values[k];
      t1 += w * dx * values[k];
      ++inside;
    }
    const double det = s0 * s2 - s1 * s1;
    if (inside < 2 || !(det > 1e-14 * s0 * s2)) {
      out[m] = interp(s);
      if (fell_back) *fell_back = true;
    } else {
      out[m] = (s2 * t0 - s1 * t1) / det;
    }
  }
  return out;
}

/// Derivative curve on the intervals between successive points of `at`.
inline HazardCurve differentiate_cumulative(const std::vector<double>& knots, const std::vector<double>& values,
                                            double b, const std::vector<double>& at, bool* fell_back = nullptr) {
  if (at.size() < 2) throw InputError("need at least two prediction times");
  const auto sm = smooth_cumulative(knots, values, b, at, fell_back);
  std::vector<double> v(at.size() - 1);
  for (std::size_t m = 0; m + 1 < at.size(); ++m) v[m] = (sm[m + 1] - sm[m]) / (at[m + 1] - at[m]);
  return HazardCurve(TimeGrid(at), std::move(v), CurveKind::hazard);
}

/// Smoothed differencing of the cumulative estimates. Bounds come from
/// smoothing cum +- 1.96 se the same way and are clamped to bracket the
/// estimate; they are approximate.
inline Decumulated decumulate(const TVCoxFit& fit, const SmootherSpec& spec) {
  if (!(spec.b > 0.0)) throw InputError("smoothing bandwidth b must be > 0");
  std::vector<double> at = spec.pred_times;
  if (at.empty()) {
    const std::size_t m = 51;
    for (std::size_t k = 0; k < m; ++k) {
      at.push_back(fit.start + (fit.stop - fit.start) * static_cast<double>(k) / static_cast<double>(m - 1));
    }
  }
  for (std::size_t k = 0; k < at.size(); ++k) {
    if (at[k] < fit.start - 1e-12 || at[k] > fit.stop + 1e-12) throw InputError("prediction time outside fit range");
    if (k && !(at[k] > at[k - 1])) throw InputError("prediction times must be increasing");
  }
  Decumulated out;
  double max_width = 0.0;
  for (std::size_t j = 0; j < fit.grid.bins(); ++j) max_width = std::max(max_width, fit.grid.width(j));
  const bool raw = spec.b < max_width;
  if (raw) out.notes.push_back("warning: bandwidth below grid spacing; using raw differences");
  const double b = raw ? 0.0 : spec.b;

  const auto& knots = fit.grid.edges();
  auto process = [&](const CumulativeEffect& e, bool expo) {
    std::vector<double> v{0.0}, lo{0.0}, hi{0.0};
    for (std::size_t j = 0; j < e.cum.size(); ++j) {
      v.push_back(e.cum[j]);
      lo.push_back(e.cum[j] - 1.96 * std::sqrt(e.cum_var[j]));
      hi.push_back(e.cum[j] + 1.96 * std::sqrt(e.cum_var[j]));
    }
    bool fb = false;
    HazardCurve c = differentiate_cumulative(knots, v, b, at, &fb);
    const HazardCurve cl = differentiate_cumulative(knots, lo, b, at);
    const HazardCurve ch = differentiate_cumulative(knots, hi, b, at);
    std::vector<double> L(c.size()), U(c.size());
    for (std::size_t m = 0; m < c.size(); ++m) {
      L[m] = std::min({cl.values[m], ch.values[m], c.values[m]});
      U[m] = std::max({cl.values[m], ch.values[m], c.values[m]});
      if (expo) {
        c.values[m] = std::exp(c.values[m]);
        L[m] = std::exp(L[m]);
        U[m] = std::exp(U[m]);
      }
    }
    c.kind = expo ? CurveKind::hazard : CurveKind::log_ratio;
    c.set_bounds(std::move(L), std::move(U));
    c.notes.push_back("approximate bounds");
    if (fb && !raw) c.notes.push_back("warning: sparse smoothing window; interpolated");
    return c;
  };
  out.baseline = process(fit.A0, true);
  for (const auto& e : fit.B) out.effects.push_back({e.name, process(e, false)});
  return out;
}

struct TermTest {
  std::string name;
  double sup_stat = 0.0, sup_p = 1.0;
  double ks_stat = 0.0, ks_p = 1.0;
  double cvm_stat = 0.0, cvm_p = 1.0;
};

struct ParametricTerm {
  std::string name;
  double estimate = 0.0, se = 0.0, robust_se = 0.0, z = 0.0, p = 1.0;
};

struct TestReport {
  std::vector<TermTest> nonparametric;
  std::vector<ParametricTerm> parametric;
  std::size_t n_resample = 0;
};

namespace detail {

struct ProcessStats {
  double sup = 0.0, ks = 0.0, cvm = 0.0;
};

/// Statistics of one cumulative path given its interval rates.
inline ProcessStats process_stats(const TimeGrid& g, const std::vector<double>& rate, const std::vector<double>& se) {
  ProcessStats s;
  const std::size_t J = g.bins();
  std::vector<double> cum(J + 1, 0.0);
  for (std::size_t j = 0; j < J; ++j) cum[j + 1] = cum[j] + rate[j] * g.width(j);
  const double tau = g.stop() - g.start();
  double prev = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    if (se[j] > 0.0) s.sup = std::max(s.sup, std::abs(cum[j + 1]) / se[j]);
    const double frac = (g.upper(j) - g.start()) / tau;
    const double dev = cum[j + 1] - frac * cum[J];
    s.ks = std::max(s.ks, std::abs(dev));
    s.cvm += g.width(j) * (prev * prev + prev * dev + dev * dev) / 3.0;
    prev = dev;
  }
  return s;
}

}  // namespace detail

/// Supremum test of B(t) = 0 and KS / CvM tests of a constant effect for each
/// nph term, with null distributions from a wild bootstrap of the subject score
/// contributions (standard normal multipliers); Wald tests for constant terms.
inline TestReport test_effects(const TVCoxFit& fit, std::size_t n_resample = 500, std::uint64_t seed = 1) {
  if (n_resample < 50) throw InputError("test_effects needs at least 50 resamples");
  const std::size_t J = fit.grid.bins(), Q = fit.B.size();
  const auto n = static_cast<std::size_t>(fit.subject_scores.rows());
  TestReport rep;
  rep.n_resample = n_resample;

  std::vector<std::vector<double>> se(Q, std::vector<double>(J));
  std::vector<detail::ProcessStats> observed(Q);
  for (std::size_t q = 0; q < Q; ++q) {
    for (std::size_t j = 0; j < J; ++j) se[q][j] = std::sqrt(fit.B[q].cum_var[j]);
    observed[q] = detail::process_stats(fit.grid, fit.B[q].rate, se[q]);
  }
  std::vector<std::vector<detail::ProcessStats>> boot(n_resample, std::vector<detail::ProcessStats>(Q));
  parallel_for(n_resample, [&](std::size_t r) {
    Rng rng = Rng::stream(seed, r);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(fit.subject_scores.cols());
    for (std::size_t i = 0; i < n; ++i) u += rng.normal() * fit.subject_scores.row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::VectorXd th = fit.info_inv * u;
    for (std::size_t q = 0; q < Q; ++q) {
      std::vector<double> rate(J);
      for (std::size_t j = 0; j < J; ++j) rate[j] = th(static_cast<Eigen::Index>(J + q * J + j));
      boot[r][q] = detail::process_stats(fit.grid, rate, se[q]);
    }
  });
  auto pval = [&](std::size_t q, auto member) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n_resample; ++r) {
      if (boot[r][q].*member >= observed[q].*member) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n_resample);
  };
  for (std::size_t q = 0; q < Q; ++q) {
    TermTest t;
    t.name = fit.B[q].name;
    t.sup_stat = observed[q].sup;
    t.ks_stat = observed[q].ks;
    t.cvm_stat = observed[q].cvm;
    t.sup_p = pval(q, &detail::ProcessStats::sup);
    t.ks_p = pval(q, &detail::ProcessStats::ks);
    t.cvm_p = pval(q, &detail::ProcessStats::cvm);
    rep.nonparametric.push_back(t);
  }
  const boost::math::normal nd;
  for (std::size_t k = 0; k < fit.gamma.size(); ++k) {
    ParametricTerm p;
    p.name = fit.gamma_names[k];
    p.estimate = fit.gamma[k];
    p.se = std::sqrt(fit.gamma_cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
    p.robust_se = fit.gamma_robust_se[k];
    p.z = p.estimate / p.se;
    p.p = 2.0 * boost::math::cdf(boost::math::complement(nd, std::abs(p.z)));
    rep.parametric.push_back(p);
  }
  return rep;
}

}  // namespace hazbench
