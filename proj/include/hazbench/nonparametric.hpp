#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "binning.hpp"
#include "data.hpp"
#include "grid.hpp"

namespace hazbench {

/// Distinct event times with death counts and risk-set sizes.
///
/// Ties: all events at one time are processed together, with the risk set
/// counted before removals; subjects censored at an event time remain at risk
/// through that time.
struct RiskTable {
  std::vector<double> times;
  std::vector<double> deaths;
  std::vector<double> at_risk;
};

namespace detail {

/// Sum of `weights` at each distinct observation time, with the risk set size.
/// Times with zero total weight are kept when `keep_zero` is set.
struct WeightedTimes {
  std::vector<double> times;
  std::vector<double> weight;
  std::vector<double> at_risk;
};

inline WeightedTimes weighted_times(const SurvDataset& data, std::span<const double> weights, bool keep_zero) {
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return data[a].time < data[b].time; });
  WeightedTimes out;
  std::size_t k = 0;
  while (k < n) {
    const double t = data[order[k]].time;
    const double risk = static_cast<double>(n - k);
    double w = 0.0;
    while (k < n && data[order[k]].time == t) {
      w += weights[order[k]];
      ++k;
    }
    if (w != 0.0 || keep_zero) {
      out.times.push_back(t);
      out.weight.push_back(w);
      out.at_risk.push_back(risk);
    }
  }
  return out;
}

inline std::vector<double> event_weights(const SurvDataset& data) {
  std::vector<double> w(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) w[i] = static_cast<double>(data[i].event);
  return w;
}

inline std::vector<double> step_edges(const std::vector<double>& times) {
  std::vector<double> e;
  e.reserve(times.size() + 1);
  e.push_back(0.0);
  e.insert(e.end(), times.begin(), times.end());
  return e;
}

}  // namespace detail

inline RiskTable risk_table(const SurvDataset& data) {
  const auto w = detail::event_weights(data);
  const auto wt = detail::weighted_times(data, w, false);
  RiskTable rt;
  rt.times = wt.times;
  rt.deaths = wt.weight;
  rt.at_risk = wt.at_risk;
  return rt;
}

/// Nelson-Aalen cumulative hazard; a step function with jumps d_i / Y_i.
///
/// With `level` in (0, 1), pointwise bounds use the variance sum of d_i / Y_i^2
/// on the plain scale, truncated at zero.
inline HazardCurve nelson_aalen(const SurvDataset& data, double level = 0.0) {
  const RiskTable rt = risk_table(data);
  if (rt.times.empty()) throw InputError("Nelson-Aalen estimate requires at least one event");
  std::vector<double> cum(rt.times.size()), var(rt.times.size());
  double h = 0.0, v = 0.0;
  for (std::size_t i = 0; i < rt.times.size(); ++i) {
    h += rt.deaths[i] / rt.at_risk[i];
    v += rt.deaths[i] / (rt.at_risk[i] * rt.at_risk[i]);
    cum[i] = h;
    var[i] = v;
  }
  HazardCurve c(TimeGrid(detail::step_edges(rt.times)), cum, CurveKind::cumulative_hazard);
  if (level > 0.0 && level < 1.0) {
    const double z = boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
    std::vector<double> lo(cum.size()), hi(cum.size());
    for (std::size_t i = 0; i < cum.size(); ++i) {
      lo[i] = std::max(0.0, cum[i] - z * std::sqrt(var[i]));
      hi[i] = cum[i] + z * std::sqrt(var[i]);
    }
    c.set_bounds(std::move(lo), std::move(hi));
  }
  return c;
}

/// Increments of the Nelson-Aalen estimate (jump sizes), aligned with risk_table times.
inline std::vector<double> nelson_aalen_jumps(const SurvDataset& data) {
  const RiskTable rt = risk_table(data);
  std::vector<double> j(rt.times.size());
  for (std::size_t i = 0; i < j.size(); ++i) j[i] = rt.deaths[i] / rt.at_risk[i];
  return j;
}

/// Kaplan-Meier product-limit survival. S(0) = 1; drops only at event times.
/// With no events the curve is S = 1 on (0, max time].
inline HazardCurve kaplan_meier(const SurvDataset& data) {
  if (data.empty()) throw InputError("empty dataset");
  const RiskTable rt = risk_table(data);
  if (rt.times.empty()) {
    return HazardCurve(TimeGrid({0.0, data.max_time()}), {1.0}, CurveKind::survival);
  }
  std::vector<double> s(rt.times.size());
  double surv = 1.0;
  for (std::size_t i = 0; i < rt.times.size(); ++i) {
    surv *= 1.0 - rt.deaths[i] / rt.at_risk[i];
    s[i] = surv;
  }
  return HazardCurve(TimeGrid(detail::step_edges(rt.times)), s, CurveKind::survival);
}

/// Piecewise-constant hazard MLE d_j / R_j for one stratum. Bins with zero
/// exposure get value 0 and are flagged missing.
inline HazardCurve piecewise_mle(const OccExpTable& table, std::size_t stratum = 0) {
  if (stratum >= table.n_strata) throw InputError("stratum out of range");
  const std::size_t J = table.bins();
  HazardCurve c(table.grid, std::vector<double>(J, 0.0), CurveKind::hazard);
  for (std::size_t j = 0; j < J; ++j) {
    const double R = table.R(j, stratum);
    if (R > 0.0) {
      c.values[j] = static_cast<double>(table.d(j, stratum)) / R;
    } else {
      c.set_missing(j);
    }
  }
  return c;
}

/// Scale a baseline hazard by exp(x'beta); bounds are scaled identically.
inline HazardCurve predict_hazard(const HazardCurve& base, std::span<const double> beta, std::span<const double> x) {
  if (beta.size() != x.size()) throw InputError("predict_hazard: beta and x differ in dimension");
  if (base.kind != CurveKind::hazard) throw InputError("predict_hazard: base curve must be a hazard");
  double lp = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) lp += beta[k] * x[k];
  const double scale = std::exp(lp);
  HazardCurve out = base;
  for (auto& v : out.values) v *= scale;
  for (auto& v : out.lower) v *= scale;
  for (auto& v : out.upper) v *= scale;
  return out;
}

/// log(a_j / b_j) per bin; bins with a zero denominator are flagged missing (NaN).
inline HazardCurve log_hazard_ratio(const HazardCurve& a, const HazardCurve& b) {
  if (!(a.grid == b.grid)) throw InputError("log_hazard_ratio: grids differ");
  HazardCurve out(a.grid, std::vector<double>(a.size()), CurveKind::log_ratio);
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (b.values[j] > 0.0 && a.values[j] > 0.0 && !a.is_missing(j) && !b.is_missing(j)) {
      out.values[j] = std::log(a.values[j] / b.values[j]);
    } else {
      out.values[j] = kNaN;
      out.set_missing(j);
    }
  }
  return out;
}

}  // namespace hazbench
