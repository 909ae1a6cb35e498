#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"
#include "grid.hpp"
#include "nonparametric.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace hazbench {

enum class KernelShape { epanechnikov, rectangle, biweight, triweight };

/// Symmetric kernel supported on [-1, 1], integrating to one.
struct KernelSpec {
  KernelShape shape = KernelShape::epanechnikov;

  double operator()(double u) const {
    if (u < -1.0 || u > 1.0) return 0.0;
    const double v = 1.0 - u * u;
    switch (shape) {
      case KernelShape::epanechnikov: return 0.75 * v;
      case KernelShape::rectangle: return 0.5;
      case KernelShape::biweight: return 0.9375 * v * v;
      case KernelShape::triweight: return 1.09375 * v * v * v;
    }
    return 0.0;
  }
};

inline KernelShape parse_kernel_shape(const std::string& s) {
  if (s == "epanechnikov") return KernelShape::epanechnikov;
  if (s == "rectangle" || s == "uniform") return KernelShape::rectangle;
  if (s == "biweight" || s == "biquadratic") return KernelShape::biweight;
  if (s == "triweight" || s == "triquadratic") return KernelShape::triweight;
  throw InputError("unknown kernel '" + s + "'");
}

enum class BandwidthMode { global, local, nearest_neighbor };

/// `value` is the global bandwidth or the pilot for local mode; 0 selects the
/// rule of thumb (range) / (8 * events^0.2). `k` is the nearest-neighbour
/// order; 0 selects ceil(sqrt(distinct event times)).
struct BandwidthSpec {
  BandwidthMode mode = BandwidthMode::global;
  double value = 0.0;
  std::size_t k = 0;
};

inline BandwidthMode parse_bandwidth_mode(const std::string& s) {
  if (s == "global") return BandwidthMode::global;
  if (s == "local") return BandwidthMode::local;
  if (s == "nn" || s == "nearest_neighbor") return BandwidthMode::nearest_neighbor;
  throw InputError("unknown bandwidth mode '" + s + "'");
}

enum class BoundaryMode { none, left, right, both };

struct BoundarySpec {
  BoundaryMode mode = BoundaryMode::none;
};

inline BoundaryMode parse_boundary_mode(const std::string& s) {
  if (s == "none") return BoundaryMode::none;
  if (s == "left") return BoundaryMode::left;
  if (s == "right") return BoundaryMode::right;
  if (s == "both") return BoundaryMode::both;
  throw InputError("unknown boundary mode '" + s + "'");
}

/// Rule-of-thumb global bandwidth over a time range with `events` failures.
inline double rule_of_thumb_bandwidth(double lo, double hi, std::size_t events) {
  const double span = hi - lo;
  return span / (8.0 * std::pow(static_cast<double>(std::max<std::size_t>(events, 1)), 0.2));
}

/// Kernel-smoothed hazard from arbitrary per-record failure indicators.
///
/// Ramlau-Hansen form: h(t) = (1/b) sum_i K((t - t_i)/b) w_i / Y(t_i) over
/// distinct observation times, where w_i sums the indicators at t_i. Passing
/// the raw event flags gives kernel_hazard; presmoothed indicators give the
/// presmoothed estimator. Evaluated at grid midpoints; midpoints outside the
/// estimation range are 0 and flagged missing. Boundary correction reflects
/// the increments about the range ends.
inline HazardCurve hazard_from_indicators(const SurvDataset& data, std::span<const double> indicators,
                                          const KernelSpec& kernel, const BandwidthSpec& bw, const TimeGrid& grid,
                                          BoundarySpec bounds = {}, std::optional<TimeRange> range = {}) {
  if (indicators.size() != data.size()) throw InputError("indicator count does not match dataset");
  const auto wt = detail::weighted_times(data, indicators, false);
  const std::size_t J = grid.bins();
  HazardCurve out(grid, std::vector<double>(J, 0.0), CurveKind::hazard);
  if (wt.times.empty()) {
    out.notes.push_back("no events: hazard estimate is identically zero");
    return out;
  }
  std::vector<double> jumps(wt.times.size());
  for (std::size_t i = 0; i < jumps.size(); ++i) jumps[i] = wt.weight[i] / wt.at_risk[i];

  const TimeRange r = range.value_or(TimeRange{wt.times.front(), wt.times.back()});
  if (!(r.hi >= r.lo)) throw InputError("estimation range is empty");
  const double span = r.hi > r.lo ? r.hi - r.lo : grid.stop() - grid.start();
  const double pilot = bw.value > 0.0 ? bw.value : rule_of_thumb_bandwidth(0.0, span, wt.times.size());
  if (pilot > span) out.notes.push_back("warning: bandwidth exceeds estimation range");

  const std::size_t k =
      bw.k > 0 ? bw.k : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(wt.times.size()))));
  auto kth_distance = [&](double t) {
    std::vector<double> d(wt.times.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::abs(t - wt.times[i]);
    const std::size_t kk = std::min(k, d.size()) - 1;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
    return d[kk];
  };

  std::vector<double> bandwidth(J, pilot);
  if (bw.mode != BandwidthMode::global) {
    std::vector<double> dk(J);
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t j = 0; j < J; ++j) {
      dk[j] = kth_distance(grid.midpoint(j));
      const double m = grid.midpoint(j);
      if (m >= r.lo && m <= r.hi) {
        sum += dk[j];
        ++cnt;
      }
    }
    const double mean_dk = cnt ? sum / static_cast<double>(cnt) : 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      double b = bw.mode == BandwidthMode::nearest_neighbor ? dk[j]
                                                            : (mean_dk > 0.0 ? pilot * dk[j] / mean_dk : pilot);
      bandwidth[j] = b > 0.0 ? b : pilot;
    }
  }

  const bool left = bounds.mode == BoundaryMode::left || bounds.mode == BoundaryMode::both;
  const bool right = bounds.mode == BoundaryMode::right || bounds.mode == BoundaryMode::both;
  for (std::size_t j = 0; j < J; ++j) {
    const double t = grid.midpoint(j);
    if (t < r.lo || t > r.hi) {
      out.set_missing(j);
      continue;
    }
    const double b = bandwidth[j];
    double h = 0.0;
    for (std::size_t i = 0; i < jumps.size(); ++i) {
      const double ti = wt.times[i];
      double kern = kernel((t - ti) / b);
      if (ti >= r.lo && ti <= r.hi) {
        if (left) kern += kernel((t - (2.0 * r.lo - ti)) / b);
        if (right) kern += kernel((t - (2.0 * r.hi - ti)) / b);
      }
      h += kern * jumps[i];
    }
    out.values[j] = h / b;
  }
  return out;
}

/// Kernel hazard estimate from the observed event indicators.
inline HazardCurve kernel_hazard(const SurvDataset& data, const KernelSpec& kernel, const BandwidthSpec& bw,
                                 const TimeGrid& grid, BoundarySpec bounds = {},
                                 std::optional<TimeRange> range = {}) {
  const auto w = detail::event_weights(data);
  return hazard_from_indicators(data, w, kernel, bw, grid, bounds, range);
}

/// Nadaraya-Watson estimate of P(failure | observed time = t).
class PresmoothedIndicator {
 public:
  PresmoothedIndicator(const SurvDataset& data, double bandwidth, KernelSpec kernel)
      : b_(bandwidth), kernel_(kernel) {
    if (!(bandwidth > 0.0)) throw InputError("presmoothing bandwidth must be > 0");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto c) { return data[a].time < data[c].time; });
    for (auto i : order) {
      times_.push_back(data[i].time);
      delta_.push_back(static_cast<double>(data[i].event));
    }
  }

  double operator()(double t) const {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < times_.size(); ++i) {
      const double w = kernel_((t - times_[i]) / b_);
      num += w * delta_[i];
      den += w;
    }
    if (den > 0.0) return num / den;
    std::size_t best = 0;
    for (std::size_t i = 1; i < times_.size(); ++i) {
      if (std::abs(times_[i] - t) < std::abs(times_[best] - t)) best = i;
    }
    return times_.empty() ? 0.0 : delta_[best];
  }

  /// p-hat at each record of `data`, in record order.
  std::vector<double> at_records(const SurvDataset& data) const {
    std::vector<double> p(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) p[i] = (*this)(data[i].time);
    return p;
  }

 private:
  double b_;
  KernelSpec kernel_;
  std::vector<double> times_;
  std::vector<double> delta_;
};

inline PresmoothedIndicator presmooth_indicator(const SurvDataset& data, double bandwidth, KernelSpec kernel = {}) {
  return PresmoothedIndicator(data, bandwidth, kernel);
}

enum class Estimand { h, H, S };

inline Estimand parse_estimand(const std::string& s) {
  if (s == "h") return Estimand::h;
  if (s == "H") return Estimand::H;
  if (s == "S") return Estimand::S;
  throw InputError("unknown estimand '" + s + "' (expected h, H or S)");
}

/// Presmoothed kernel estimate: the censoring indicator is replaced by its
/// Nadaraya-Watson smooth before hazard smoothing. Estimand H integrates the
/// hazard over the grid (midpoint rule, values at right edges); S = exp(-H).
inline HazardCurve presmoothed_hazard(const SurvDataset& data, Estimand estimand, const KernelSpec& kernel,
                                      double bw_presmooth, double bw_hazard, BoundarySpec bounds,
                                      const TimeGrid& grid, std::optional<TimeRange> range = {}) {
  if (!(bw_hazard > 0.0)) throw InputError("hazard bandwidth must be > 0");
  const auto p = presmooth_indicator(data, bw_presmooth, kernel).at_records(data);
  HazardCurve h = hazard_from_indicators(data, p, kernel, BandwidthSpec{BandwidthMode::global, bw_hazard, 0}, grid,
                                         bounds, range);
  if (estimand == Estimand::h) return h;
  HazardCurve c(grid, std::vector<double>(grid.bins()),
                estimand == Estimand::H ? CurveKind::cumulative_hazard : CurveKind::survival);
  double cum = 0.0;
  for (std::size_t j = 0; j < grid.bins(); ++j) {
    if (!h.is_missing(j)) cum += h.values[j] * grid.width(j);
    c.values[j] = estimand == Estimand::H ? cum : std::exp(-cum);
  }
  c.notes = h.notes;
  return c;
}

struct BandwidthPair {
  double presmooth = 0.0;
  double hazard = 0.0;
  bool operator==(const BandwidthPair&) const = default;
};

struct BandwidthSelection {
  BandwidthPair chosen;
  std::vector<double> criterion;  // per candidate; NaN for degenerate candidates
};

/// Bootstrap bandwidth choice for the presmoothed hazard.
///
/// The reference is the full-data estimate at the rule-of-thumb pilot
/// bandwidth. For each candidate the criterion is the mean, over B resamples
/// drawn with replacement, of the integrated squared difference between the
/// resample estimate and the reference. Ties go to the smaller bandwidth.
inline BandwidthSelection bootstrap_bandwidth(const SurvDataset& data, const std::vector<BandwidthPair>& candidates,
                                              std::size_t B, std::uint64_t seed, const TimeGrid& grid,
                                              KernelSpec kernel = {KernelShape::biweight}, BoundarySpec bounds = {}) {
  if (candidates.empty()) throw InputError("bootstrap_bandwidth: no candidates");
  if (B < 1) throw InputError("bootstrap_bandwidth: need at least one resample");
  const TimeRange range{grid.start(), grid.stop()};
  const double pilot_b = rule_of_thumb_bandwidth(grid.start(), grid.stop(), data.n_events());
  const HazardCurve pilot = presmoothed_hazard(data, Estimand::h, kernel, pilot_b, pilot_b, bounds, grid, range);

  std::vector<std::vector<double>> ise(B, std::vector<double>(candidates.size(), kNaN));
  parallel_for(B, [&](std::size_t b) {
    Rng rng = Rng::stream(seed, b);
    std::vector<SurvRecord> recs;
    recs.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) recs.push_back(data[rng.index(data.size())]);
    const SurvDataset boot(std::move(recs), data.covariate_names());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto& cand = candidates[c];
      if (!(cand.presmooth > 0.0) || !(cand.hazard > 0.0)) continue;
      const HazardCurve est =
          presmoothed_hazard(boot, Estimand::h, kernel, cand.presmooth, cand.hazard, bounds, grid, range);
      double s = 0.0;
      for (std::size_t j = 0; j < grid.bins(); ++j) {
        const double d = est.values[j] - pilot.values[j];
        s += d * d * grid.width(j);
      }
      ise[b][c] = s;
    }
  });

  BandwidthSelection sel;
  sel.criterion.assign(candidates.size(), 0.0);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (std::size_t b = 0; b < B; ++b) sel.criterion[c] += ise[b][c];
    sel.criterion[c] /= static_cast<double>(B);
  }
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (!std::isfinite(sel.criterion[c])) continue;
    if (!best) {
      best = c;
      continue;
    }
    const double cb = sel.criterion[*best], cc = sel.criterion[c];
    const auto& a = candidates[c];
    const auto& o = candidates[*best];
    const bool smaller = std::tie(a.hazard, a.presmooth) < std::tie(o.hazard, o.presmooth);
    if (cc < cb || (cc == cb && smaller)) best = c;
  }
  if (!best) throw EstimatorError("bootstrap_bandwidth: all candidates degenerate");
  sel.chosen = candidates[*best];
  return sel;
}

/// Scalar candidates applied to both bandwidths.
inline BandwidthSelection bootstrap_bandwidth(const SurvDataset& data, const std::vector<double>& candidates,
                                              std::size_t B, std::uint64_t seed, const TimeGrid& grid,
                                              KernelSpec kernel = {KernelShape::biweight}, BoundarySpec bounds = {}) {
  std::vector<BandwidthPair> pairs;
  for (double c : candidates) pairs.push_back({c, c});
  return bootstrap_bandwidth(data, pairs, B, seed, grid, kernel, bounds);
}

}  // namespace hazbench
