#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "binning.hpp"
#include "data.hpp"
#include "dbeta.hpp"
#include "formula.hpp"
#include "grid.hpp"
#include "kernel.hpp"
#include "mrh.hpp"
#include "nonparametric.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "spline.hpp"
#include "timevar.hpp"

namespace hazbench {

enum class HazardForm { peaked_decline, flat, piecewise };

/// Known true hazard for simulation.
///
/// peaked_decline: h(t) = A (t/tau) exp(1 - t/tau), peak A at tau;
/// flat: h(t) = level; piecewise: values on (edges[k], edges[k+1]], constant
/// last value beyond the final edge.
struct TrueHazardSpec {
  HazardForm form = HazardForm::peaked_decline;
  double peak_height = 0.6;
  double peak_time = 0.75;
  double level = 0.15;
  std::vector<double> edges;
  std::vector<double> values;
  double horizon = 10.0;

  static TrueHazardSpec peaked(double horizon = 10.0) {
    TrueHazardSpec s;
    s.horizon = horizon;
    return s;
  }
  static TrueHazardSpec flat_at(double level, double horizon = 10.0) {
    TrueHazardSpec s;
    s.form = HazardForm::flat;
    s.level = level;
    s.horizon = horizon;
    return s;
  }

  void validate() const {
    if (!(horizon > 0.0)) throw InputError("true hazard horizon must be > 0");
    switch (form) {
      case HazardForm::peaked_decline:
        if (!(peak_height > 0.0 && peak_time > 0.0)) throw InputError("peak height and time must be > 0");
        break;
      case HazardForm::flat:
        if (!(level > 0.0)) throw InputError("flat hazard level must be > 0");
        break;
      case HazardForm::piecewise:
        if (edges.size() != values.size() + 1 || values.empty()) throw InputError("piecewise hazard shape mismatch");
        for (double v : values) {
          if (!(v >= 0.0)) throw InputError("piecewise hazard values must be >= 0");
        }
        break;
    }
  }

  double hazard(double t) const {
    switch (form) {
      case HazardForm::peaked_decline: {
        const double u = t / peak_time;
        return peak_height * u * std::exp(1.0 - u);
      }
      case HazardForm::flat: return level;
      case HazardForm::piecewise: {
        for (std::size_t k = 0; k < values.size(); ++k) {
          if (t <= edges[k + 1]) return values[k];
        }
        return values.back();
      }
    }
    return 0.0;
  }

  double cumulative(double t) const {
    switch (form) {
      case HazardForm::peaked_decline: {
        const double u = t / peak_time;
        return peak_height * peak_time * std::exp(1.0) * (1.0 - (1.0 + u) * std::exp(-u));
      }
      case HazardForm::flat: return level * t;
      case HazardForm::piecewise: {
        double c = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) {
          const double lo = edges[k], hi = edges[k + 1];
          if (t <= lo) return c;
          c += values[k] * (std::min(t, hi) - lo);
          if (t <= hi) return c;
        }
        return c + values.back() * (t - edges.back());
      }
    }
    return 0.0;
  }

  /// Smallest t in [0, horizon] with cumulative(t) = H, or +inf when the
  /// horizon is reached first.
  double inverse_cumulative(double H) const {
    if (H <= 0.0) return 0.0;
    if (H > cumulative(horizon)) return std::numeric_limits<double>::infinity();
    if (form == HazardForm::flat) return std::min(H / level, horizon);
    std::uintmax_t iters = 200;
    const auto r = boost::math::tools::toms748_solve([&](double t) { return cumulative(t) - H; }, 0.0, horizon,
                                                     boost::math::tools::eps_tolerance<double>(52), iters);
    return 0.5 * (r.first + r.second);
  }
};

enum class Scenario { PH, NPH };

inline std::string to_string(Scenario s) { return s == Scenario::PH ? "PH" : "NPH"; }
inline Scenario parse_scenario(const std::string& s) {
  if (s == "PH" || s == "ph") return Scenario::PH;
  if (s == "NPH" || s == "nph") return Scenario::NPH;
  throw InputError("unknown scenario '" + s + "'");
}

/// PH: covariate trt (half the subjects), hazard h0(t) exp(beta trt), one
/// pooled censoring distribution. NPH: covariates trt and sex in four equal
/// cells; trt = 0 follows `specs[0]`, trt = 1 follows `specs[1]`, sex acts
/// proportionally with beta; censoring calibrated per trt group.
struct SimConfig {
  Scenario scenario = Scenario::PH;
  std::size_t n = 1000;
  std::size_t reps = 100;
  std::size_t bins = 32;
  double beta_true = -0.5;
  std::vector<double> censor_targets{0.63};
  double censor_slack = 0.02;  // tolerated excess of the administrative floor over a target
  std::uint64_t seed = 1;
  double horizon = 10.0;

  static SimConfig ph_defaults() { return SimConfig{}; }
  static SimConfig nph_defaults() {
    SimConfig c;
    c.scenario = Scenario::NPH;
    c.censor_targets = {0.63, 0.30};
    return c;
  }

  void validate() const {
    const std::size_t cells = scenario == Scenario::PH ? 2 : 4;
    if (n < 2 * cells) throw InputError("simulation needs n >= 2 per covariate cell (n >= " + std::to_string(2 * cells) + ")");
    if (reps < 1) throw InputError("simulation needs reps >= 1");
    if (bins < 1) throw InputError("simulation needs bins >= 1");
    const std::size_t groups = scenario == Scenario::PH ? 1 : 2;
    if (censor_targets.size() != groups) {
      throw InputError("scenario " + to_string(scenario) + " needs " + std::to_string(groups) + " censoring target(s)");
    }
    for (double t : censor_targets) {
      if (!(t >= 0.0 && t < 1.0)) throw InputError("censoring targets must lie in [0, 1)");
    }
  }

  TimeGrid grid() const { return TimeGrid::equal_width(0.0, horizon, bins); }
};

inline std::vector<TrueHazardSpec> default_truth(const SimConfig& c) {
  if (c.scenario == Scenario::PH) return {TrueHazardSpec::peaked(c.horizon)};
  return {TrueHazardSpec::peaked(c.horizon), TrueHazardSpec::flat_at(0.15, c.horizon)};
}

/// A censoring group: a true hazard and the multipliers exp(x'beta) of its
/// equally sized covariate cells.
struct CensorGroup {
  TrueHazardSpec spec;
  std::vector<double> multipliers;
};

struct CensorCalibration {
  double C = std::numeric_limits<double>::infinity();  // Uniform(0, C) censoring; inf means none
  double expected = 0.0;  // expected censored fraction at C
  double floor = 0.0;     // administrative-only censored fraction
  bool at_floor = false;
};

/// Expected censored fraction with Uniform(0, C) censoring and administrative
/// censoring at the horizon, averaged over the group's cells.
inline double expected_censoring(const CensorGroup& g, double C) {
  const double h = g.spec.horizon;
  double cens = 0.0;
  for (double m : g.multipliers) {
    double p_event;
    if (!std::isfinite(C)) {
      p_event = -std::expm1(-m * g.spec.cumulative(h));
    } else {
      const double upper = std::min(h, C);
      auto f = [&](double t) { return m * g.spec.hazard(t) * std::exp(-m * g.spec.cumulative(t)) * (1.0 - t / C); };
      p_event = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, upper, 15, 1e-13);
    }
    cens += 1.0 - p_event;
  }
  return cens / static_cast<double>(g.multipliers.size());
}

/// Uniform censoring bound C matching the target censored fraction. Targets
/// below the administrative floor by at most `slack` use no random censoring;
/// anything else unattainable is an error.
inline CensorCalibration calibrate_censoring(const CensorGroup& g, double target, double slack = 0.0) {
  CensorCalibration cal;
  cal.floor = expected_censoring(g, std::numeric_limits<double>::infinity());
  if (target <= cal.floor) {
    if (cal.floor - target > slack + 1e-12) {
      throw InputError("unattainable censoring target " + format_double(target) + ": administrative censoring alone gives " +
                       format_double(cal.floor));
    }
    cal.at_floor = true;
    cal.expected = cal.floor;
    return cal;
  }
  auto fn = [&](double C) { return expected_censoring(g, C) - target; };
  const double h = g.spec.horizon;
  double lo = 1e-8 * h, hi = h;
  if (fn(lo) < 0.0) throw InputError("unattainable censoring target " + format_double(target));
  while (fn(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e9 * h) throw InputError("unattainable censoring target " + format_double(target));
  }
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(fn, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
  cal.C = 0.5 * (r.first + r.second);
  cal.expected = expected_censoring(g, cal.C);
  return cal;
}

/// Censoring groups of a configuration: one pooled group (PH) or one per trt level (NPH).
inline std::vector<CensorGroup> censor_groups(const std::vector<TrueHazardSpec>& specs, const SimConfig& c) {
  const double e = std::exp(c.beta_true);
  if (c.scenario == Scenario::PH) return {CensorGroup{specs.at(0), {1.0, e}}};
  return {CensorGroup{specs.at(0), {1.0, e}}, CensorGroup{specs.at(1), {1.0, e}}};
}

inline std::vector<CensorCalibration> calibrate_all(const std::vector<TrueHazardSpec>& specs, const SimConfig& c) {
  std::vector<CensorCalibration> out;
  const auto groups = censor_groups(specs, c);
  for (std::size_t g = 0; g < groups.size(); ++g) out.push_back(calibrate_censoring(groups[g], c.censor_targets[g], c.censor_slack));
  return out;
}

/// One simulated dataset. Subject i has trt = i mod 2 and, under NPH,
/// sex = (i / 2) mod 2. Failure times by inversion T = H^{-1}(-log U / e^{x'b}),
/// then Uniform(0, C) censoring and administrative censoring at the horizon.
/// Random stream (seed, rep_index).
inline SurvDataset generate_dataset(const std::vector<TrueHazardSpec>& specs, const SimConfig& c,
                                    std::size_t rep_index, const std::vector<CensorCalibration>* calib = nullptr) {
  c.validate();
  for (const auto& s : specs) s.validate();
  std::vector<CensorCalibration> own;
  if (!calib) {
    own = calibrate_all(specs, c);
    calib = &own;
  }
  Rng rng = Rng::stream(c.seed, rep_index);
  std::vector<SurvRecord> recs;
  recs.reserve(c.n);
  for (std::size_t i = 0; i < c.n; ++i) {
    const double trt = static_cast<double>(i % 2);
    const double sex = static_cast<double>((i / 2) % 2);
    const bool nph = c.scenario == Scenario::NPH;
    const TrueHazardSpec& spec = nph ? specs.at(static_cast<std::size_t>(trt)) : specs.at(0);
    const double lp = nph ? c.beta_true * sex : c.beta_true * trt;
    const CensorCalibration& cal = nph ? calib->at(static_cast<std::size_t>(trt)) : calib->at(0);
    const double u = rng.uniform();
    const double v = rng.uniform();
    const double T = spec.inverse_cumulative(-std::log(u) / std::exp(lp));
    const double U = std::isfinite(cal.C) ? cal.C * v : std::numeric_limits<double>::infinity();
    const double obs = std::min({T, U, spec.horizon});
    const int event = (T <= U && T <= spec.horizon) ? 1 : 0;
    std::vector<double> x{trt};
    if (nph) x.push_back(sex);
    recs.push_back({obs, event, std::move(x)});
  }
  std::vector<std::string> names{"trt"};
  if (c.scenario == Scenario::NPH) names.push_back("sex");
  SurvDataset d(std::move(recs), names);
  return c.scenario == Scenario::NPH ? with_strata(d, {"trt"}) : d;
}

inline SurvDataset generate_dataset(const SimConfig& c, std::size_t rep_index) {
  return generate_dataset(default_truth(c), c, rep_index);
}

// ---- metrics ----

namespace detail {

inline std::vector<double> truth_at_midpoints(const TrueHazardSpec& truth, const TimeGrid& grid) {
  std::vector<double> v(grid.bins());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = truth.hazard(grid.midpoint(j));
  return v;
}

template <class F>
std::vector<double> aggregate(const std::vector<HazardCurve>& est, const TrueHazardSpec& truth, const TimeGrid& grid,
                              F&& per_value, bool root) {
  const auto tv = truth_at_midpoints(truth, grid);
  std::vector<double> sum(grid.bins(), 0.0), cnt(grid.bins(), 0.0);
  for (const auto& e : est) {
    if (!(e.grid == grid)) throw InputError("metrics: estimate grid differs from the evaluation grid");
    for (std::size_t j = 0; j < grid.bins(); ++j) {
      if (e.is_missing(j) || !std::isfinite(e.values[j])) continue;
      sum[j] += per_value(tv[j] - e.values[j]);
      cnt[j] += 1.0;
    }
  }
  for (std::size_t j = 0; j < sum.size(); ++j) {
    sum[j] = cnt[j] > 0.0 ? sum[j] / cnt[j] : kNaN;
    if (root) sum[j] = std::sqrt(sum[j]);
  }
  return sum;
}

}  // namespace detail

/// Mean over replicates of truth - estimate per bin (truth at the bin
/// midpoint). Missing bins are excluded; a bin missing everywhere is NaN.
inline std::vector<double> bias(const std::vector<HazardCurve>& est, const TrueHazardSpec& truth, const TimeGrid& grid) {
  return detail::aggregate(est, truth, grid, [](double d) { return d; }, false);
}

inline std::vector<double> rmse(const std::vector<HazardCurve>& est, const TrueHazardSpec& truth, const TimeGrid& grid) {
  return detail::aggregate(est, truth, grid, [](double d) { return d * d; }, true);
}

/// Bin-width-weighted sum of |value|; NaN bins are skipped.
inline double integrate_abs(const std::vector<double>& per_bin, const TimeGrid& grid) {
  if (per_bin.size() != grid.bins()) throw InputError("integrate_abs: length differs from grid");
  double s = 0.0;
  for (std::size_t j = 0; j < per_bin.size(); ++j) {
    if (std::isfinite(per_bin[j])) s += grid.width(j) * std::abs(per_bin[j]);
  }
  return s;
}

struct IntegratedMetrics {
  double abs_bias = 0.0;
  double rmse = 0.0;
};

inline IntegratedMetrics integrated_metrics(const std::vector<double>& bias_j, const std::vector<double>& rmse_j,
                                            const TimeGrid& grid) {
  return {integrate_abs(bias_j, grid), integrate_abs(rmse_j, grid)};
}

// ---- benchmark ----

struct BenchOptions {
  std::size_t mcmc_iter = 6000;
  std::size_t mcmc_burn = 1000;
  std::size_t mcmc_thin = 1;
  double dbeta_c = 5.0;
  SplineBasisSpec spline{};
  KernelShape kernel = KernelShape::epanechnikov;
  double kernel_bw = 0.0;     // 0 = rule of thumb
  double presmooth_bw = 0.0;  // 0 = rule of thumb, both bandwidths
  bool keep_curves = true;
};

/// One estimator's output for a replicate: one hazard curve per target group
/// on the benchmark grid, and the PH effect when the estimator reports one.
struct BenchEstimate {
  std::vector<HazardCurve> curves;
  std::optional<double> beta;
};

struct BenchContext {
  SimConfig config;
  TimeGrid grid;
  BenchOptions options;
  std::uint64_t seed = 1;  // per replicate and estimator
};

using BenchEstimator = std::function<BenchEstimate(const SurvDataset&, const BenchContext&)>;

namespace detail {

/// Records of target group g at baseline of the other covariates.
inline SurvDataset group_subset(const SurvDataset& d, Scenario sc, std::size_t g, bool baseline_only) {
  return d.filter([&](const SurvRecord& r, int) {
    if (sc == Scenario::PH) return r.covariates[0] == 0.0;
    if (r.covariates[0] != static_cast<double>(g)) return false;
    return !baseline_only || r.covariates[1] == 0.0;
  });
}

inline std::size_t n_targets(Scenario s) { return s == Scenario::PH ? 1 : 2; }

/// Map interval values back to the benchmark bins (by bin midpoint).
inline HazardCurve on_bins(const TimeGrid& coarse, const std::vector<double>& vals, const TimeGrid& grid) {
  HazardCurve c(grid, std::vector<double>(grid.bins(), 0.0));
  for (std::size_t j = 0; j < grid.bins(); ++j) {
    const auto k = coarse.bin_of(grid.midpoint(j));
    if (k) c.values[j] = vals[*k];
    else c.set_missing(j);
  }
  return c;
}

inline std::size_t log2_exact(std::size_t bins) {
  std::size_t M = 0;
  while ((std::size_t{1} << M) < bins) ++M;
  if ((std::size_t{1} << M) != bins) throw InputError("MRH needs a power-of-two bin count");
  return M;
}

}  // namespace detail

/// Registered benchmark estimators. Each returns the hazard of every target
/// group at all-zero covariates.
inline const std::map<std::string, BenchEstimator>& estimator_registry() {
  static const std::map<std::string, BenchEstimator> reg = [] {
    std::map<std::string, BenchEstimator> m;
    const auto sub = detail::group_subset;

    m["piecewise"] = [sub](const SurvDataset& d, const BenchContext& ctx) {
      BenchEstimate e;
      for (std::size_t g = 0; g < detail::n_targets(ctx.config.scenario); ++g) {
        const SurvDataset s = sub(d, ctx.config.scenario, g, true);
        e.curves.push_back(piecewise_mle(bin_occurrence_exposure(SurvDataset(s.records(), s.covariate_names()), ctx.grid)));
      }
      return e;
    };
    m["kernel"] = [sub](const SurvDataset& d, const BenchContext& ctx) {
      BenchEstimate e;
      for (std::size_t g = 0; g < detail::n_targets(ctx.config.scenario); ++g) {
        const SurvDataset s = sub(d, ctx.config.scenario, g, true);
        e.curves.push_back(kernel_hazard(s, KernelSpec{ctx.options.kernel},
                                         BandwidthSpec{BandwidthMode::global, ctx.options.kernel_bw, 0}, ctx.grid));
      }
      return e;
    };
    m["presmooth"] = [sub](const SurvDataset& d, const BenchContext& ctx) {
      BenchEstimate e;
      for (std::size_t g = 0; g < detail::n_targets(ctx.config.scenario); ++g) {
        const SurvDataset s = sub(d, ctx.config.scenario, g, true);
        double bw = ctx.options.presmooth_bw;
        if (!(bw > 0.0)) {
          double lo = INFINITY, hi = -INFINITY;
          for (const auto& r : s.records()) {
            if (r.event) {
              lo = std::min(lo, r.time);
              hi = std::max(hi, r.time);
            }
          }
          if (!std::isfinite(lo)) throw EstimatorError("presmooth: no events");
          bw = rule_of_thumb_bandwidth(lo, hi, s.n_events());
        }
        e.curves.push_back(presmoothed_hazard(s, Estimand::h, KernelSpec{KernelShape::biweight}, bw, bw, {}, ctx.grid));
      }
      return e;
    };
    m["spline"] = [sub](const SurvDataset& d, const BenchContext& ctx) {
      BenchEstimate e;
      SplineBasisSpec spec = ctx.options.spline;
      spec.n_bins = ctx.grid.bins();
      if (ctx.config.scenario == Scenario::PH) {
        const auto f = parse_formula("Surv(time, status) ~ trt");
        const auto fit = fit_spline_hazard(d, f, spec, ctx.grid);
        e.curves.push_back(to_baseline(fit));
        e.beta = fit.beta.at(0);
      } else {
        const auto f = parse_formula("Surv(time, status) ~ sex");
        for (std::size_t g = 0; g < 2; ++g) {
          const SurvDataset s = sub(d, ctx.config.scenario, g, false);
          const auto fit = fit_spline_hazard(SurvDataset(s.records(), s.covariate_names()), f, spec, ctx.grid);
          e.curves.push_back(to_baseline(fit));
          if (g == 0) e.beta = fit.beta.at(0);
        }
      }
      return e;
    };
    m["mrh"] = [](const SurvDataset& d, const BenchContext& ctx) {
      BenchEstimate e;
      const bool ph = ctx.config.scenario == Scenario::PH;
      const auto f = parse_formula(ph ? "Surv(time, status) ~ trt" : "Surv(time, status) ~ sex + nph(trt)");
      MCMCControl ctl;
      ctl.n_iter = ctx.options.mcmc_iter;
      ctl.n_burn = ctx.options.mcmc_burn;
      ctl.n_thin = ctx.options.mcmc_thin;
      ctl.seed = ctx.seed;
      MRHOptions opts;
      opts.horizon = ctx.grid.stop();
      const auto chains = fit_mrh(d, f, detail::log2_exact(ctx.grid.bins()), MRHPriors{}, ctl, opts);
      const auto s = summarize_chains(chains, 0.05, ctx.grid);
      for (const auto& h : s.hazards) e.curves.push_back(h);
      e.beta = s.beta_median.at(0);
      return e;
    };
    m["dbeta"] = [sub](const SurvDataset& d, const BenchContext& ctx) {
      BenchEstimate e;
      if (!ctx.grid.equal_width() || ctx.grid.start() != 0.0) throw InputError("dbeta needs an equal-width grid from 0");
      for (std::size_t g = 0; g < detail::n_targets(ctx.config.scenario); ++g) {
        const SurvDataset s = sub(d, ctx.config.scenario, g, true);
        const auto dd = discretize(s, DiscretizeMode::ceiling, ctx.grid.width(0));
        DBetaPriors pr;
        pr.c = ctx.options.dbeta_c;
        MCMCControl ctl;
        ctl.n_iter = ctx.options.mcmc_iter;
        ctl.n_burn = ctx.options.mcmc_burn;
        ctl.n_thin = ctx.options.mcmc_thin;
        ctl.seed = derive_seed(ctx.seed, g);
        const auto chains = fit_markov_beta(dd, pr, ctl);
        e.curves.push_back(dbeta_hazard(chains, ctx.grid));
      }
      return e;
    };
    m["timevar"] = [](const SurvDataset& d, const BenchContext& ctx) {
      BenchEstimate e;
      const bool ph = ctx.config.scenario == Scenario::PH;
      const auto f = parse_formula(ph ? "Surv(time, status) ~ const(trt)" : "Surv(time, status) ~ const(sex) + nph(trt)");
      const auto fit = fit_timevar(d, f, ctx.grid, TimeRange{ctx.grid.start(), ctx.grid.stop()});
      std::vector<double> base(fit.grid.bins());
      for (std::size_t j = 0; j < base.size(); ++j) base[j] = std::exp(fit.A0.rate[j]);
      e.curves.push_back(detail::on_bins(fit.grid, base, ctx.grid));
      if (!ph) {
        std::vector<double> g1(base.size());
        for (std::size_t j = 0; j < g1.size(); ++j) g1[j] = std::exp(fit.A0.rate[j] + fit.B.at(0).rate[j]);
        e.curves.push_back(detail::on_bins(fit.grid, g1, ctx.grid));
      }
      e.beta = fit.gamma.at(0);
      return e;
    };
    return m;
  }();
  return reg;
}

struct MetricsRow {
  std::string estimator;  // "name" (PH) or "name/trt<g>" (NPH)
  std::vector<double> bias, rmse;
  double integrated_abs_bias = 0.0;
  double integrated_rmse = 0.0;
  std::size_t reps_ok = 0;
  std::size_t failures = 0;
  std::optional<double> beta_mean;
  double runtime_s = 0.0;  // wall clock; not part of the deterministic outputs
  std::vector<std::string> errors;  // "rep <k>: message"
  std::vector<HazardCurve> curves;  // successful replicate estimates, in replicate order
  std::vector<std::size_t> curve_reps;  // replicate index of each entry of `curves`
};

struct MetricsTable {
  SimConfig config;
  TimeGrid grid;
  std::vector<std::vector<double>> truth;  // per target group at bin midpoints
  std::vector<MetricsRow> rows;
  std::vector<double> realized_censoring;  // per replicate, overall
  std::vector<CensorCalibration> calibration;

  const MetricsRow& row(const std::string& name) const {
    for (const auto& r : rows) {
      if (r.estimator == name) return r;
    }
    throw InputError("no metrics row '" + name + "'");
  }
};

/// Simulate config.reps datasets and fit every named estimator to each.
/// Replicates run in parallel; each derives its own data and estimator seeds
/// from (seed, rep), so results do not depend on scheduling. A failing fit is
/// recorded against its replicate and excluded from the metrics. Bins past a
/// replicate's last observed time are marked missing before scoring.
inline MetricsTable run_benchmark(const SimConfig& config, const std::vector<std::string>& estimators,
                                  const BenchOptions& options = {}, std::vector<TrueHazardSpec> truth = {}) {
  config.validate();
  if (estimators.empty()) throw InputError("no estimators selected");
  const auto& reg = estimator_registry();
  for (const auto& e : estimators) {
    if (!reg.count(e)) throw InputError("unknown estimator '" + e + "'");
  }
  if (truth.empty()) truth = default_truth(config);
  MetricsTable tab;
  tab.config = config;
  tab.grid = config.grid();
  tab.calibration = calibrate_all(truth, config);
  const std::size_t T = detail::n_targets(config.scenario);
  for (std::size_t g = 0; g < T; ++g) tab.truth.push_back(detail::truth_at_midpoints(truth.at(g), tab.grid));

  struct Slot {
    std::optional<BenchEstimate> est;
    std::string error;
    double seconds = 0.0;
  };
  std::vector<std::vector<Slot>> slots(config.reps, std::vector<Slot>(estimators.size()));
  tab.realized_censoring.assign(config.reps, 0.0);
  parallel_for(config.reps, [&](std::size_t rep) {
    const SurvDataset d = generate_dataset(truth, config, rep, &tab.calibration);
    tab.realized_censoring[rep] = 1.0 - static_cast<double>(d.n_events()) / static_cast<double>(d.size());
    const double tmax = d.max_time();
    for (std::size_t k = 0; k < estimators.size(); ++k) {
      BenchContext ctx{config, tab.grid, options, derive_seed(derive_seed(config.seed, rep), 1000 + k)};
      const auto t0 = std::chrono::steady_clock::now();
      try {
        slots[rep][k].est = reg.at(estimators[k])(d, ctx);
        if (slots[rep][k].est->curves.size() != T) throw EstimatorError("wrong number of target curves");
        // scored on the observed follow-up only: past the last time every estimate is extrapolation
        for (auto& cur : slots[rep][k].est->curves) {
          for (std::size_t j = 0; j < cur.size(); ++j) {
            if (tab.grid.midpoint(j) > tmax) cur.set_missing(j);
          }
        }
      } catch (const std::exception& ex) {
        slots[rep][k].est.reset();
        slots[rep][k].error = ex.what();
      }
      slots[rep][k].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  });

  for (std::size_t k = 0; k < estimators.size(); ++k) {
    for (std::size_t g = 0; g < T; ++g) {
      MetricsRow row;
      row.estimator = T == 1 ? estimators[k] : estimators[k] + "/trt" + std::to_string(g);
      double beta_sum = 0.0;
      std::size_t beta_n = 0;
      for (std::size_t rep = 0; rep < config.reps; ++rep) {
        const Slot& s = slots[rep][k];
        row.runtime_s += g == 0 ? s.seconds : 0.0;
        if (!s.est) {
          ++row.failures;
          row.errors.push_back("rep " + std::to_string(rep) + ": " + s.error);
          continue;
        }
        ++row.reps_ok;
        row.curves.push_back(s.est->curves[g]);
        row.curve_reps.push_back(rep);
        if (s.est->beta) {
          beta_sum += *s.est->beta;
          ++beta_n;
        }
      }
      if (beta_n) row.beta_mean = beta_sum / static_cast<double>(beta_n);
      if (row.reps_ok) {
        row.bias = bias(row.curves, truth.at(g), tab.grid);
        row.rmse = rmse(row.curves, truth.at(g), tab.grid);
      } else {
        row.bias.assign(tab.grid.bins(), kNaN);
        row.rmse.assign(tab.grid.bins(), kNaN);
      }
      const auto im = integrated_metrics(row.bias, row.rmse, tab.grid);
      row.integrated_abs_bias = im.abs_bias;
      row.integrated_rmse = im.rmse;
      if (!options.keep_curves) {
        row.curves.clear();
        row.curve_reps.clear();
      }
      tab.rows.push_back(std::move(row));
    }
  }
  return tab;
}

}  // namespace hazbench
