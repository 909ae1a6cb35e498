#pragma once

#include <algorithm>
#include <array>
#include <cmath>
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

struct YPControl {
  int max_iter = 200;
  std::optional<std::array<double, 2>> init;  // (theta1, theta2); default is the crude rate ratio
  double lower = 1e-3;
  double upper = 1e3;
  double level = 0.95;
  std::size_t n_band = 1000;  // draws for the simultaneous band
  std::uint64_t seed = 1;
  bool swap_groups = false;   // treat level 0 as treatment
};

/// Short/long-term hazard ratio hr = t1 t2 / (t1 + (t2 - t1) S) with exact
/// endpoints hr = t1 at S = 1 and hr = t2 at S = 0.
inline double yp_hazard_ratio(double theta1, double theta2, double S) {
  if (S == 1.0) return theta1;
  if (S == 0.0) return theta2;
  return 1.0 / (S / theta1 + (1.0 - S) / theta2);
}

struct YPFit {
  double theta1 = 1.0, theta2 = 1.0;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();  // of (log theta1, log theta2)
  HazardCurve hr;  // kind log_ratio, values are hr(t) per interval, pointwise bounds
  std::vector<double> band_lo, band_hi;
  double band_crit = 0.0;
  HazardCurve S_C;  // control product-limit survival, step curve
  double loglik = 0.0;
  int iterations = 0;
  std::string term;
  double max_time = 0.0;
  std::vector<std::string> notes;

  double control_survival(double t) const { return S_C.step_at(t, 1.0); }
};

namespace detail {

struct YPData {
  std::vector<double> S_at_event;  // S_C at each treatment event time
  std::vector<double> S_at_time;   // S_C at each treatment observation time
};

inline double yp_objective(const YPData& d, double la, double lb, double* ga, double* gb) {
  const double a = std::exp(la), b = std::exp(lb);
  double ll = 0.0, da = 0.0, db = 0.0;
  for (double S : d.S_at_event) {
    const double D = a + (b - a) * S;
    ll += la + lb - std::log(D);
    da += 1.0 - a * (1.0 - S) / D;
    db += 1.0 - b * S / D;
  }
  for (double S : d.S_at_time) {
    const double D = a + (b - a) * S;
    const double Lam = b * (std::log(D) - lb - std::log(S));
    ll -= Lam;
    da -= b * a * (1.0 - S) / D;
    db -= Lam + b * (b * S / D - 1.0);
  }
  if (ga) *ga = da;
  if (gb) *gb = db;
  return ll;
}

}  // namespace detail

/// Two-sample short-term/long-term hazard ratio model.
///
/// The control survival S_C is the product-limit estimate of the level-0
/// group; where it would reach 0 the last factor uses d/(Y+1). The
/// pseudo-log-likelihood of the treatment group is
/// sum delta log hr(t) - Lambda_T(t), with
/// Lambda_T = theta2 log((theta1 + (theta2 - theta1) S_C) / (theta2 S_C)),
/// maximised over (log theta1, log theta2) by box-constrained BFGS.
inline YPFit fit_yp(const SurvDataset& data, const ModelFormula& formula, const YPControl& ctrl = {}) {
  if (formula.nph_terms.size() != 1 || !formula.ph_terms.empty()) {
    throw InputError("yp model needs exactly one nph() term and no other covariates");
  }
  if (!(ctrl.lower > 0.0 && ctrl.upper > ctrl.lower)) throw InputError("yp bounds must satisfy 0 < lower < upper");
  const std::size_t col = data.covariate_index(formula.nph_terms[0]);
  std::vector<SurvRecord> ctl, trt;
  for (const auto& r : data.records()) {
    const double g = r.covariates[col];
    if (g != 0.0 && g != 1.0) throw InputError("yp group term '" + formula.nph_terms[0] + "' must be 0/1");
    ((g == 1.0) != ctrl.swap_groups ? trt : ctl).push_back(r);
  }
  auto events = [](const std::vector<SurvRecord>& v) {
    std::size_t e = 0;
    for (const auto& r : v) e += static_cast<std::size_t>(r.event);
    return e;
  };
  if (events(ctl) == 0 || events(trt) == 0) throw EstimatorError("yp: each group needs at least one event");

  YPFit fit;
  fit.term = formula.nph_terms[0];
  fit.max_time = data.max_time();

  // control product-limit survival with the tail fix
  std::sort(ctl.begin(), ctl.end(), [](const auto& x, const auto& y) { return x.time < y.time; });
  std::vector<double> ctimes, csurv;
  {
    double s = 1.0;
    std::size_t k = 0;
    const std::size_t n = ctl.size();
    while (k < n) {
      const double t = ctl[k].time;
      const double Y = static_cast<double>(n - k);
      double d = 0.0;
      while (k < n && ctl[k].time == t) d += ctl[k++].event;
      if (d > 0.0) {
        double f = 1.0 - d / Y;
        if (f <= 0.0) {
          f = 1.0 - d / (Y + 1.0);
          fit.notes.push_back("control survival reaches zero; last factor uses d/(Y+1)");
        }
        s *= f;
        ctimes.push_back(t);
        csurv.push_back(s);
      }
    }
  }
  std::vector<double> sedges{0.0};
  sedges.insert(sedges.end(), ctimes.begin(), ctimes.end());
  fit.S_C = HazardCurve(TimeGrid(sedges), csurv, CurveKind::survival);

  detail::YPData yd;
  for (const auto& r : trt) {
    const double S = fit.control_survival(r.time);
    yd.S_at_time.push_back(S);
    if (r.event) yd.S_at_event.push_back(S);
  }

  // starting point and box on the log scale
  const double lo = std::log(ctrl.lower), hi = std::log(ctrl.upper);
  Eigen::Vector2d x;
  if (ctrl.init) {
    x << std::log((*ctrl.init)[0]), std::log((*ctrl.init)[1]);
  } else {
    double rt = 0.0, rc = 0.0;
    for (const auto& r : trt) rt += r.time;
    for (const auto& r : ctl) rc += r.time;
    const double crude = (static_cast<double>(events(trt)) / rt) / (static_cast<double>(events(ctl)) / rc);
    x << std::log(crude), std::log(crude);
  }
  x = x.cwiseMax(lo).cwiseMin(hi);

  auto f_and_g = [&](const Eigen::Vector2d& v, Eigen::Vector2d& g) {
    double ga = 0.0, gb = 0.0;
    const double ll = detail::yp_objective(yd, v(0), v(1), &ga, &gb);
    g << -ga, -gb;
    return -ll;
  };
  auto projected = [&](const Eigen::Vector2d& v, const Eigen::Vector2d& g) {
    Eigen::Vector2d p = g;
    for (int k = 0; k < 2; ++k) {
      if ((v(k) <= lo && g(k) > 0.0) || (v(k) >= hi && g(k) < 0.0)) p(k) = 0.0;
    }
    return p;
  };

  Eigen::Vector2d g;
  double f = f_and_g(x, g);
  Eigen::Matrix2d Hinv = Eigen::Matrix2d::Identity();
  bool converged = false;
  int it = 0;
  for (; it < ctrl.max_iter; ++it) {
    const Eigen::Vector2d pg = projected(x, g);
    if (pg.norm() < 1e-8 * (1.0 + std::abs(f))) {
      converged = true;
      break;
    }
    Eigen::Vector2d dir = -(Hinv * pg);
    for (int k = 0; k < 2; ++k) {
      if (pg(k) == 0.0) dir(k) = 0.0;
    }
    if (dir.dot(pg) >= 0.0) {
      Hinv.setIdentity();
      dir = -pg;
    }
    double t = 1.0;
    Eigen::Vector2d xn, gn;
    double fn = 0.0;
    for (;;) {
      xn = (x + t * dir).cwiseMax(lo).cwiseMin(hi);
      fn = f_and_g(xn, gn);
      if (std::isfinite(fn) && fn <= f + 1e-4 * pg.dot(xn - x)) break;
      t *= 0.5;
      if (t < 1e-14) break;
    }
    if (!(std::isfinite(fn) && fn <= f)) {
      if ((xn - x).norm() < 1e-14) {
        converged = true;
        break;
      }
      Hinv.setIdentity();
      continue;
    }
    const Eigen::Vector2d s = xn - x, y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
      Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    const bool tiny = std::abs(f - fn) < 1e-15 * (1.0 + std::abs(f)) && s.norm() < 1e-12;
    x = xn;
    g = gn;
    f = fn;
    if (tiny) {
      converged = true;
      break;
    }
  }
  if (!converged) throw EstimatorError("yp fit did not converge in " + std::to_string(ctrl.max_iter) + " iterations");
  fit.iterations = it;
  fit.loglik = -f;
  fit.theta1 = std::exp(x(0));
  fit.theta2 = std::exp(x(1));

  // observed pseudo-information by central differences of the gradient
  Eigen::Matrix2d H;
  for (int k = 0; k < 2; ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(x(k)));
    Eigen::Vector2d xp = x, xm = x, gp, gm;
    xp(k) += h;
    xm(k) -= h;
    f_and_g(xp, gp);
    f_and_g(xm, gm);
    H.col(k) = (gp - gm) / (2.0 * h);
  }
  H = 0.5 * (H + H.transpose()).eval();
  Eigen::LDLT<Eigen::Matrix2d> ldlt(H);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
    H.diagonal().array() += 1e-8;
    fit.notes.push_back("warning: pseudo-information not positive definite; ridge added");
  }
  fit.cov = H.inverse();

  // hr on the control event-time grid
  std::vector<double> edges{0.0};
  edges.insert(edges.end(), ctimes.begin(), ctimes.end());
  if (fit.max_time > edges.back()) edges.push_back(fit.max_time);
  const std::size_t J = edges.size() - 1;
  std::vector<double> v(J), plo(J), phi(J), se(J), logv(J);
  std::vector<Eigen::Vector2d> grads(J);
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + ctrl.level / 2.0);
  for (std::size_t j = 0; j < J; ++j) {
    const double S = j == 0 ? 1.0 : csurv[std::min(j - 1, csurv.size() - 1)];
    const double a = fit.theta1, b = fit.theta2, D = a + (b - a) * S;
    v[j] = yp_hazard_ratio(a, b, S);
    logv[j] = std::log(v[j]);
    grads[j] << 1.0 - a * (1.0 - S) / D, 1.0 - b * S / D;
    se[j] = std::sqrt(std::max(0.0, grads[j].dot(fit.cov * grads[j])));
    plo[j] = std::exp(logv[j] - z * se[j]);
    phi[j] = std::exp(logv[j] + z * se[j]);
  }
  fit.hr = HazardCurve(TimeGrid(edges), v, CurveKind::log_ratio);
  fit.hr.set_bounds(plo, phi);

  // simultaneous band: sup of the standardized log-hr process under N(estimate, cov)
  const Eigen::LLT<Eigen::Matrix2d> llt(fit.cov);
  const Eigen::Matrix2d Lc = llt.matrixL();
  std::vector<double> sups(ctrl.n_band, 0.0);
  parallel_for(ctrl.n_band, [&](std::size_t r) {
    Rng rng = Rng::stream(ctrl.seed, r);
    Eigen::Vector2d e;
    e << rng.normal(), rng.normal();
    const Eigen::Vector2d xs = x + Lc * e;
    const double a = std::exp(xs(0)), b = std::exp(xs(1));
    double sup = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      if (!(se[j] > 0.0)) continue;
      const double S = j == 0 ? 1.0 : csurv[std::min(j - 1, csurv.size() - 1)];
      sup = std::max(sup, std::abs(std::log(yp_hazard_ratio(a, b, S)) - logv[j]) / se[j]);
    }
    sups[r] = sup;
  });
  fit.band_crit = ctrl.n_band ? std::max(z, quantile(sups, ctrl.level)) : z;
  fit.band_lo.resize(J);
  fit.band_hi.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    fit.band_lo[j] = std::exp(logv[j] - fit.band_crit * se[j]);
    fit.band_hi[j] = std::exp(logv[j] + fit.band_crit * se[j]);
  }
  fit.notes.push_back("simultaneous band from resampled sup of the standardized log-ratio process");
  return fit;
}

struct HazardRatioPoint {
  double hr = 1.0, lower = 1.0, upper = 1.0;
};

/// hr(t) from the control survival at t, with the pointwise interval.
inline HazardRatioPoint hazard_ratio_at(const YPFit& fit, double t, double level = 0.95) {
  if (!(t >= 0.0 && t <= fit.max_time)) throw InputError("hazard_ratio_at: time outside fit range");
  const double S = fit.control_survival(t);
  const double a = fit.theta1, b = fit.theta2, D = a + (b - a) * S;
  HazardRatioPoint p;
  p.hr = yp_hazard_ratio(a, b, S);
  Eigen::Vector2d g;
  g << 1.0 - a * (1.0 - S) / D, 1.0 - b * S / D;
  const double se = std::sqrt(std::max(0.0, g.dot(fit.cov * g)));
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
  p.lower = std::exp(std::log(p.hr) - z * se);
  p.upper = std::exp(std::log(p.hr) + z * se);
  return p;
}

}  // namespace hazbench
