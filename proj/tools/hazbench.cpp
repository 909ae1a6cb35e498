#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hazbench/hazbench.hpp"

#ifndef HAZBENCH_VERSION
#define HAZBENCH_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace hazbench;

namespace {

struct Common {
  std::string out = "hazbench_out";
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  bool plots = false;
  std::string config;
};

struct FitArgs {
  std::string data, model, estimator;
  std::vector<std::string> factors;
  bool complete_cases = false;
  std::size_t bins = 32;
  std::optional<double> horizon;
  double alpha = 0.05;
  // kernel / presmooth
  std::string kernel, bw_mode = "global", bound = "none", estimand = "h";
  double bw = 0.0, bw_pre = 0.0;
  std::size_t nn_k = 0;
  std::vector<double> bw_candidates;
  std::size_t bootstrap = 100;
  // spline
  std::size_t knots = 12, degree = 3;
  std::optional<double> lambda;
  // mcmc
  std::size_t iter = 10000, burn = 1000, thin = 1, chains = 1;
  double jitter = 0.0;
  // mrh
  double split_a = 1.0, H_shape = 0.01, H_rate = 0.01, beta_var = 25.0;
  // dbeta
  double c = 0.0, prior_shape = 0.001;
  bool random_c = false;
  std::string discretize = "ceiling";
  std::optional<double> unit;
  // timevar
  double smooth_b = 0.0;
  std::size_t pred_points = 51, resamples = 500;
  // yp
  std::size_t band_draws = 1000;
  bool swap_groups = false;
};

struct SimArgs {
  std::string scenario = "PH";
  std::size_t n = 1000, bins = 32, rep = 0;
  double beta = -0.5;
  std::vector<double> censor;
};

struct BenchArgs {
  std::string scenario = "PH";
  std::size_t n = 1000, reps = 100, bins = 32;
  double beta = -0.5;
  std::vector<double> censor;
  std::vector<std::string> estimators{"piecewise", "kernel", "presmooth", "spline", "mrh", "dbeta", "timevar"};
  std::size_t mcmc_iter = 6000, mcmc_burn = 1000;
  double dbeta_c = 5.0;
};

struct DiagArgs {
  std::string chains;
  std::vector<std::size_t> lags{1, 5, 10, 50};
  double threshold = 1.1;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& s) {
  if (s) return *s;
  if (const char* env = std::getenv("HAZBENCH_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw InputError(std::string("HAZBENCH_SEED is not an unsigned integer: '") + env + "'");
  }
  return 1;
}

/// key=value lines of a config file as --key=value arguments.
std::vector<std::string> config_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim_field(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InputError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = detail::trim_field(t.substr(0, eq));
    std::string val = detail::trim_field(t.substr(eq + 1));
    if (key == "config") continue;
    std::replace(key.begin(), key.end(), '_', '-');
    out.push_back("--" + key + "=" + val);
  }
  return out;
}

class Manifest {
 public:
  void set(const std::string& k, const std::string& v) { kv_.emplace_back(k, v); }
  void set(const std::string& k, double v) { set(k, format_double(v)); }
  void write(const fs::path& p) const {
    std::ofstream os(p);
    if (!os) throw InputError("cannot write '" + p.string() + "'");
    for (const auto& [k, v] : kv_) os << k << "=" << v << "\n";
  }

 private:
  std::vector<std::pair<std::string, std::string>> kv_;
};

/// Options given on the command line or through the config file, in declaration order.
void echo_options(const CLI::App* app, Manifest& m) {
  for (const CLI::Option* o : app->get_options()) {
    if (o->count() == 0 || o->get_name() == "--help" || o->get_name() == "-h") continue;
    std::string v;
    for (const auto& r : o->results()) v += (v.empty() ? "" : ",") + r;
    std::string name = o->get_name();
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    m.set("option." + name, v);
  }
}

std::string join_edges(const TimeGrid& g) {
  std::string s;
  for (double e : g.edges()) s += (s.empty() ? "" : " ") + format_double(e);
  return s;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw InputError("cannot create output directory '" + p.string() + "'");
}

void write_curve(const fs::path& dir, const std::string& stem, const HazardCurve& c, bool plots,
                 const std::string& title) {
  std::ofstream os(dir / (stem + ".csv"));
  if (!os) throw InputError("cannot write '" + (dir / (stem + ".csv")).string() + "'");
  write_hazard_csv(os, c);
  if (plots) write_svg((dir / (stem + ".svg")).string(), curve_plot(c, title));
}

struct CoefRow {
  std::string term;
  double estimate = kNaN, se = kNaN, lower = kNaN, upper = kNaN;
};

std::string num(double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); }

void write_coefficients(const fs::path& dir, const std::vector<CoefRow>& rows) {
  std::ofstream os(dir / "coefficients.csv");
  os << "term,estimate,se,lower,upper\n";
  for (const auto& r : rows) {
    os << r.term << ',' << num(r.estimate) << ',' << num(r.se) << ',' << num(r.lower) << ',' << num(r.upper) << "\n";
  }
}

SurvDataset stratum(const SurvDataset& d, std::size_t l) {
  const SurvDataset s = d.filter([&](const SurvRecord&, int st) { return st == static_cast<int>(l); });
  return SurvDataset(s.records(), s.covariate_names());
}

void require_no_ph(const ModelFormula& f, const std::string& est) {
  if (!f.ph_terms.empty()) {
    throw InputError("estimator '" + est + "' takes no proportional covariates (got '" + f.ph_terms.front() +
                     "'); use nph() terms to fit by group");
  }
}

double z_of(double alpha) { return boost::math::quantile(boost::math::normal(), 1.0 - alpha / 2.0); }

/// Per-stratum hazard outputs plus log ratios against stratum 1.
void emit_strata(const fs::path& out, const std::vector<HazardCurve>& curves, const SurvDataset& data, bool plots,
                 const std::string& est) {
  for (std::size_t l = 0; l < curves.size(); ++l) {
    write_curve(out, "hazard_s" + std::to_string(l + 1), curves[l], plots,
                est + " hazard, " + data.stratum_labels()[l]);
  }
  for (std::size_t l = 1; l < curves.size(); ++l) {
    if (!(curves[l].grid == curves[0].grid)) continue;
    write_curve(out, "log_ratio_s" + std::to_string(l + 1), log_hazard_ratio(curves[l], curves[0]), plots,
                est + " log hazard ratio, " + data.stratum_labels()[l] + " vs " + data.stratum_labels()[0]);
  }
}

MCMCControl mcmc_control(const FitArgs& a, std::uint64_t seed) {
  MCMCControl c;
  c.n_iter = a.iter;
  c.n_burn = a.burn;
  c.n_thin = a.thin;
  c.n_chains = a.chains;
  c.seed = seed;
  c.init_jitter = a.jitter;
  c.validate();
  return c;
}

/// All chains stacked into one sample set (same labels and meta).
PosteriorChains pool(const std::vector<PosteriorChains>& chains) {
  PosteriorChains p = chains.front();
  for (std::size_t k = 1; k < chains.size(); ++k) p.samples.insert(p.samples.end(), chains[k].samples.begin(), chains[k].samples.end());
  return p;
}

int cmd_fit(const FitArgs& a, const Common& c, const CLI::App* sub) {
  const std::uint64_t seed = resolve_seed(c.seed);
  const fs::path out(c.out);
  CsvTable table = read_csv_file(a.data);
  ModelFormula f = parse_formula(a.model);
  std::map<std::string, std::vector<std::string>> expanded;
  for (const auto& fac : a.factors) expanded[fac] = expand_factor(table, fac);
  f = substitute_terms(f, expanded);
  const auto ing = dataset_from_table(table, f, IngestOptions{a.complete_cases});
  const SurvDataset& data = ing.data;
  const auto sum = summarize(data);
  std::cout << "dataset: n=" << sum.n << " events=" << sum.n_events << " censored=" << sum.censored_percent()
            << "% median_time=" << sum.median_time_rounded() << " dropped=" << ing.dropped << "\n";
  ensure_dir(out);

  const double horizon = a.horizon.value_or(data.max_time());
  if (a.bins < 1) throw InputError("--bins must be >= 1");
  TimeGrid grid = TimeGrid::equal_width(0.0, horizon, a.bins);

  Manifest m;
  m.set("command", "fit");
  m.set("version", HAZBENCH_VERSION);
  echo_options(sub, m);
  m.set("seed", std::to_string(seed));
  m.set("formula", render_formula(f));
  m.set("n", std::to_string(sum.n));
  m.set("n_events", std::to_string(sum.n_events));
  m.set("censored_percent", std::to_string(sum.censored_percent()));
  m.set("median_time", std::to_string(sum.median_time_rounded()));
  m.set("dropped_rows", std::to_string(ing.dropped));
  for (std::size_t l = 0; l < data.n_strata(); ++l) m.set("stratum." + std::to_string(l + 1), data.stratum_labels()[l]);

  std::vector<std::string> notes;
  std::ostringstream report;
  const std::string& est = a.estimator;
  const std::size_t L = data.n_strata();

  if (est == "piecewise") {
    require_no_ph(f, est);
    const auto tab = bin_occurrence_exposure(data, grid);
    std::vector<HazardCurve> curves;
    for (std::size_t l = 0; l < L; ++l) curves.push_back(piecewise_mle(tab, l));
    emit_strata(out, curves, data, c.plots, est);
  } else if (est == "kernel" || est == "presmooth") {
    require_no_ph(f, est);
    const KernelSpec ks{parse_kernel_shape(!a.kernel.empty() ? a.kernel : est == "kernel" ? "epanechnikov" : "biweight")};
    const BoundarySpec bs{parse_boundary_mode(a.bound)};
    std::vector<HazardCurve> curves;
    for (std::size_t l = 0; l < L; ++l) {
      const SurvDataset s = stratum(data, l);
      if (est == "kernel") {
        curves.push_back(kernel_hazard(s, ks, BandwidthSpec{parse_bandwidth_mode(a.bw_mode), a.bw, a.nn_k}, grid, bs));
      } else {
        double bh = a.bw, bp = a.bw_pre;
        if (!a.bw_candidates.empty()) {
          const auto sel = bootstrap_bandwidth(s, a.bw_candidates, a.bootstrap, derive_seed(seed, l), grid, ks, bs);
          bh = bp = sel.chosen.hazard;
          report << "stratum " << l + 1 << ": bootstrap bandwidth " << format_double(bh) << "\n";
          m.set("bandwidth.s" + std::to_string(l + 1), bh);
        }
        if (!(bh > 0.0) || !(bp > 0.0)) {
          double lo = INFINITY, hi = -INFINITY;
          for (const auto& r : s.records()) {
            if (r.event) lo = std::min(lo, r.time), hi = std::max(hi, r.time);
          }
          if (!std::isfinite(lo)) throw EstimatorError("presmooth: stratum " + std::to_string(l + 1) + " has no events");
          const double rt = rule_of_thumb_bandwidth(lo, hi, s.n_events());
          if (!(bh > 0.0)) bh = rt;
          if (!(bp > 0.0)) bp = rt;
        }
        curves.push_back(presmoothed_hazard(s, parse_estimand(a.estimand), ks, bp, bh, bs, grid));
      }
      for (const auto& n : curves.back().notes) notes.push_back("stratum " + std::to_string(l + 1) + ": " + n);
    }
    if (curves.front().kind == CurveKind::hazard) {
      emit_strata(out, curves, data, c.plots, est);
    } else {
      const std::string stem = curves.front().kind == CurveKind::survival ? "survival_s" : "cumhaz_s";
      for (std::size_t l = 0; l < L; ++l) write_curve(out, stem + std::to_string(l + 1), curves[l], c.plots, est);
    }
  } else if (est == "spline") {
    SplineBasisSpec spec;
    spec.n_bins = a.bins;
    spec.n_knots = a.knots;
    spec.degree = a.degree;
    spec.lambda = a.lambda;
    const auto fit = fit_spline_hazard(data, f, spec, grid);
    write_curve(out, "hazard_s1", fit.curve_avg, c.plots, "spline hazard, average subject");
    write_curve(out, "baseline", to_baseline(fit), c.plots, "spline baseline hazard");
    std::vector<CoefRow> rows;
    const double z = z_of(a.alpha);
    for (std::size_t k = 0; k < fit.beta.size(); ++k) {
      rows.push_back({fit.covariate_names[k], fit.beta[k], fit.beta_se[k], fit.beta[k] - z * fit.beta_se[k],
                      fit.beta[k] + z * fit.beta_se[k]});
    }
    write_coefficients(out, rows);
    m.set("lambda", fit.lambda_hat);
    report << "smoothing parameter lambda = " << format_double(fit.lambda_hat) << "\n";
    for (const auto& r : rows) {
      report << r.term << ": " << format_double(r.estimate) << " (se " << format_double(r.se) << ")\n";
    }
  } else if (est == "mrh") {
    std::size_t M = 0;
    while ((std::size_t{1} << M) < a.bins) ++M;
    if ((std::size_t{1} << M) != a.bins) throw InputError("mrh needs --bins to be a power of two");
    MRHPriors pr{a.split_a, a.H_shape, a.H_rate, a.beta_var};
    pr.validate();
    MRHOptions opts;
    opts.M = M;
    opts.horizon = horizon;
    const auto chains = fit_mrh_chains(data, f, pr, mcmc_control(a, seed), opts);
    write_chains(out / "chains", chains, "mrh", {{"formula", render_formula(f)}});
    const auto s = summarize_chains(pool(chains), a.alpha, grid);
    for (std::size_t l = 0; l < s.hazards.size(); ++l) {
      write_curve(out, "hazard_s" + std::to_string(l + 1), s.hazards[l], c.plots,
                  "MRH hazard, " + data.stratum_labels()[l]);
    }
    for (std::size_t l = 0; l < s.log_ratios.size(); ++l) {
      write_curve(out, "log_ratio_s" + std::to_string(l + 2), s.log_ratios[l], c.plots,
                  "MRH log hazard ratio, " + data.stratum_labels()[l + 1] + " vs " + data.stratum_labels()[0]);
    }
    std::vector<CoefRow> rows;
    for (std::size_t k = 0; k < s.beta_names.size(); ++k) {
      rows.push_back({s.beta_names[k], s.beta_median[k], kNaN, s.beta_lower[k], s.beta_upper[k]});
    }
    write_coefficients(out, rows);
    if (chains.size() > 1) {
      const auto rhat = gelman_rubin(chains);
      double worst = 0.0;
      for (double r : rhat) {
        if (std::isfinite(r)) worst = std::max(worst, r);
      }
      report << "max Gelman-Rubin R-hat = " << format_double(worst) << "\n";
    }
  } else if (est == "dbeta") {
    require_no_ph(f, est);
    const DiscretizeMode mode = a.discretize == "round"     ? DiscretizeMode::round
                                : a.discretize == "ceiling" ? DiscretizeMode::ceiling
                                                            : throw InputError("--discretize must be round or ceiling");
    const double unit = a.unit.value_or(grid.width(0));
    std::vector<DiscreteSurvData> dd;
    std::size_t K = 0;
    for (std::size_t l = 0; l < L; ++l) {
      dd.push_back(discretize(stratum(data, l), mode, unit));
      K = std::max(K, dd.back().K);
      if (dd.back().sparse_warning) notes.push_back("stratum " + std::to_string(l + 1) + ": more periods than subjects");
    }
    const TimeGrid pg = TimeGrid::equal_width(0.0, unit * static_cast<double>(K), K);
    std::vector<HazardCurve> curves;
    for (std::size_t l = 0; l < L; ++l) {
      DBetaPriors pr;
      pr.c = a.c;
      pr.random_c = a.random_c;
      pr.default_shape = a.prior_shape;
      MCMCControl ctl = mcmc_control(a, derive_seed(seed, l));
      const auto chains = fit_markov_beta_chains(dd[l], pr, ctl);
      write_chains(out / ("chains_s" + std::to_string(l + 1)), chains, "dbeta",
                   {{"unit", format_double(unit)}, {"stratum", data.stratum_labels()[l]}});
      const auto pooled = pool(chains);
      curves.push_back(dbeta_hazard(pooled, pg, a.alpha));
      HazardCurve S = survival_chains(pooled, dd[l].K).summarize(a.alpha);
      std::vector<double> e = S.grid.edges();
      for (auto& x : e) x *= unit;
      S.grid = TimeGrid(e);
      write_curve(out, "survival_s" + std::to_string(l + 1), S, c.plots, "dbeta survival, " + data.stratum_labels()[l]);
    }
    emit_strata(out, curves, data, c.plots, est);
  } else if (est == "timevar") {
    const auto fit = fit_timevar(data, f, grid);
    for (const auto& n : fit.notes) notes.push_back(n);
    SmootherSpec sp;
    sp.b = a.smooth_b;
    if (!(sp.b > 0.0)) {
      // automatic: twice the widest estimation interval
      for (std::size_t j = 0; j < fit.grid.bins(); ++j) sp.b = std::max(sp.b, 2.0 * fit.grid.width(j));
    }
    m.set("smooth_b", sp.b);
    if (a.pred_points < 2) throw InputError("--pred-points must be >= 2");
    for (std::size_t i = 0; i < a.pred_points; ++i) {
      sp.pred_times.push_back(fit.start + (fit.stop - fit.start) * static_cast<double>(i) /
                                              static_cast<double>(a.pred_points - 1));
    }
    const auto dec = decumulate(fit, sp);
    for (const auto& n : dec.notes) notes.push_back(n);
    write_curve(out, "hazard_s1", dec.baseline, c.plots, "baseline hazard (decumulated)");
    for (const auto& e : dec.effects) write_curve(out, "effect_" + e.name, e.curve, c.plots, "time-varying effect " + e.name);
    {
      std::ofstream os(out / "cumulative.csv");
      os << "term,t,cumulative,se\n";
      auto dump = [&](const CumulativeEffect& e) {
        os << e.name << ',' << format_double(fit.start) << ",0,0\n";
        for (std::size_t j = 0; j < e.cum.size(); ++j) {
          os << e.name << ',' << format_double(fit.grid.upper(j)) << ',' << format_double(e.cum[j]) << ','
             << format_double(std::sqrt(e.cum_var[j])) << "\n";
        }
      };
      dump(fit.A0);
      for (const auto& e : fit.B) dump(e);
    }
    const auto rep = test_effects(fit, a.resamples, seed);
    std::vector<CoefRow> rows;
    const double z = z_of(a.alpha);
    for (const auto& p : rep.parametric) rows.push_back({p.name, p.estimate, p.se, p.estimate - z * p.se, p.estimate + z * p.se});
    write_coefficients(out, rows);
    {
      std::ofstream os(out / "tests.csv");
      os << "term,sup_stat,sup_p,ks_stat,ks_p,cvm_stat,cvm_p\n";
      for (const auto& t : rep.nonparametric) {
        os << t.name << ',' << format_double(t.sup_stat) << ',' << format_double(t.sup_p) << ','
           << format_double(t.ks_stat) << ',' << format_double(t.ks_p) << ',' << format_double(t.cvm_stat) << ','
           << format_double(t.cvm_p) << "\n";
      }
    }
    report << "Nonparametric tests (" << rep.n_resample << " resamples)\n";
    report << "  term            sup    p(sup)      KS     p(KS)     CvM    p(CvM)\n";
    for (const auto& t : rep.nonparametric) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %-12s %7.3f %8.3f %8.3f %8.3f %8.3f %8.3f\n", t.name.c_str(), t.sup_stat,
                    t.sup_p, t.ks_stat, t.ks_p, t.cvm_stat, t.cvm_p);
      report << buf;
    }
    report << "\nParametric terms\n";
    report << "  term         estimate       se   robust se        z        p\n";
    for (const auto& p : rep.parametric) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %-12s %9.4f %8.4f %10.4f %8.3f %8.4f\n", p.name.c_str(), p.estimate, p.se,
                    p.robust_se, p.z, p.p);
      report << buf;
    }
  } else if (est == "yp") {
    YPControl ctl;
    ctl.seed = seed;
    ctl.level = 1.0 - a.alpha;
    ctl.n_band = a.band_draws;
    ctl.swap_groups = a.swap_groups;
    const auto fit = fit_yp(data, f, ctl);
    for (const auto& n : fit.notes) notes.push_back(n);
    const double z = z_of(a.alpha);
    const double s1 = std::sqrt(fit.cov(0, 0)), s2 = std::sqrt(fit.cov(1, 1));
    write_coefficients(out, {{"theta1", fit.theta1, kNaN, fit.theta1 * std::exp(-z * s1), fit.theta1 * std::exp(z * s1)},
                             {"theta2", fit.theta2, kNaN, fit.theta2 * std::exp(-z * s2), fit.theta2 * std::exp(z * s2)}});
    write_curve(out, "hazard_ratio", fit.hr, false, "");
    {
      std::ofstream os(out / "band.csv");
      os << "t_lo,t_hi,hr,lower,upper,band_lower,band_upper\n";
      for (std::size_t j = 0; j < fit.hr.size(); ++j) {
        os << format_double(fit.hr.grid.lower(j)) << ',' << format_double(fit.hr.grid.upper(j)) << ','
           << format_double(fit.hr.values[j]) << ',' << format_double(fit.hr.lower[j]) << ','
           << format_double(fit.hr.upper[j]) << ',' << format_double(fit.band_lo[j]) << ','
           << format_double(fit.band_hi[j]) << "\n";
      }
    }
    if (c.plots) {
      SvgPlot p = curve_plot(fit.hr, "short/long-term hazard ratio");
      p.ylabel = "hazard ratio";
      auto lo = curve_series(fit.hr, "simultaneous band", "#2ca02c", &fit.band_lo);
      auto hi = curve_series(fit.hr, "", "#2ca02c", &fit.band_hi);
      lo.dashed = hi.dashed = true;
      p.series.push_back(lo);
      p.series.push_back(hi);
      write_svg((out / "hazard_ratio.svg").string(), p);
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "theta1 (short-term) = %.4f  [%.4f, %.4f]\ntheta2 (long-term)  = %.4f  [%.4f, %.4f]\n",
                  fit.theta1, fit.theta1 * std::exp(-z * s1), fit.theta1 * std::exp(z * s1), fit.theta2,
                  fit.theta2 * std::exp(-z * s2), fit.theta2 * std::exp(z * s2));
    report << buf << "band critical value = " << format_double(fit.band_crit) << "\n";
    report << "      time      hr   band_lo   band_hi\n";
    const std::size_t J = fit.hr.size();
    const std::size_t step = std::max<std::size_t>(1, J / 10);
    for (std::size_t j = 0; j < J; j += step) {
      std::snprintf(buf, sizeof buf, "%10.4g %7.4f %9.4f %9.4f\n", fit.hr.grid.upper(j), fit.hr.values[j],
                    fit.band_lo[j], fit.band_hi[j]);
      report << buf;
    }
  } else {
    throw InputError("unknown estimator '" + est + "'");
  }

  m.set("grid", join_edges(grid));
  for (std::size_t i = 0; i < notes.size(); ++i) m.set("note." + std::to_string(i + 1), notes[i]);
  m.write(out / "manifest.txt");
  {
    std::ofstream os(out / "strata.csv");
    os << "stratum,label,n,events\n";
    for (std::size_t l = 0; l < L; ++l) {
      const auto s = stratum(data, l);
      std::string label = data.stratum_labels()[l];
      std::replace(label.begin(), label.end(), ',', ';');  // keep the CSV one field per column
      os << l + 1 << ',' << label << ',' << s.size() << ',' << s.n_events() << "\n";
    }
  }
  const std::string rtext = report.str();
  if (!rtext.empty()) {
    std::ofstream(out / "summary.txt") << rtext;
    std::cout << rtext;
  }
  for (const auto& n : notes) std::cerr << "note: " << n << "\n";
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

SimConfig sim_config(const std::string& scenario, std::size_t n, std::size_t bins, double beta,
                     const std::vector<double>& censor, std::uint64_t seed) {
  SimConfig cfg = parse_scenario(scenario) == Scenario::PH ? SimConfig::ph_defaults() : SimConfig::nph_defaults();
  cfg.n = n;
  cfg.bins = bins;
  cfg.beta_true = beta;
  if (!censor.empty()) cfg.censor_targets = censor;
  cfg.seed = seed;
  return cfg;
}

void config_manifest(Manifest& m, const SimConfig& cfg, const std::vector<CensorCalibration>& cal) {
  m.set("scenario", to_string(cfg.scenario));
  m.set("n", std::to_string(cfg.n));
  m.set("bins", std::to_string(cfg.bins));
  m.set("beta_true", cfg.beta_true);
  m.set("horizon", cfg.horizon);
  m.set("seed", std::to_string(cfg.seed));
  for (std::size_t g = 0; g < cal.size(); ++g) {
    const std::string k = "censoring.group" + std::to_string(g + 1);
    m.set(k + ".target", cfg.censor_targets[g]);
    m.set(k + ".C", std::isfinite(cal[g].C) ? format_double(cal[g].C) : std::string("inf"));
    m.set(k + ".expected", cal[g].expected);
    m.set(k + ".admin_floor", cal[g].floor);
  }
  m.set("truth.group1", "peaked_decline A=0.6 tau=0.75");
  if (cfg.scenario == Scenario::NPH) m.set("truth.group2", "flat level=0.15");
  m.set("grid", join_edges(cfg.grid()));
}

int cmd_simulate(const SimArgs& a, const Common& c, const CLI::App* sub) {
  const SimConfig cfg = sim_config(a.scenario, a.n, a.bins, a.beta, a.censor, resolve_seed(c.seed));
  cfg.validate();
  const auto truth = default_truth(cfg);
  const auto cal = calibrate_all(truth, cfg);
  const SurvDataset d = generate_dataset(truth, cfg, a.rep, &cal);
  const fs::path out(c.out);
  ensure_dir(out);
  {
    std::ofstream os(out / "dataset.csv");
    os << "time,status";
    for (const auto& n : d.covariate_names()) os << ',' << n;
    os << "\n";
    for (const auto& r : d.records()) {
      os << format_double(r.time) << ',' << r.event;
      for (double x : r.covariates) os << ',' << format_double(x);
      os << "\n";
    }
  }
  const TimeGrid g = cfg.grid();
  {
    std::ofstream os(out / "truth.csv");
    os << "bin_index,t_mid,hazard_group1" << (truth.size() > 1 ? ",hazard_group2" : "") << ",cumhaz_group1"
       << (truth.size() > 1 ? ",cumhaz_group2" : "") << "\n";
    for (std::size_t j = 0; j < g.bins(); ++j) {
      const double t = g.midpoint(j);
      os << j << ',' << format_double(t);
      for (const auto& s : truth) os << ',' << format_double(s.hazard(t));
      for (const auto& s : truth) os << ',' << format_double(s.cumulative(t));
      os << "\n";
    }
  }
  Manifest m;
  m.set("command", "simulate");
  m.set("version", HAZBENCH_VERSION);
  echo_options(sub, m);
  config_manifest(m, cfg, cal);
  m.set("rep", std::to_string(a.rep));
  m.write(out / "manifest.txt");
  const double cens = 1.0 - static_cast<double>(d.n_events()) / static_cast<double>(d.size());
  std::cout << "simulated n=" << d.size() << " censored=" << format_double(std::round(1000.0 * cens) / 10.0) << "%\n";
  for (std::size_t k = 0; k < cal.size(); ++k) {
    if (cal[k].at_floor) {
      std::cerr << "note: group " << k + 1 << " target " << format_double(cfg.censor_targets[k])
                << " is below administrative censoring " << format_double(cal[k].floor) << "; no random censoring used\n";
    }
  }
  return 0;
}

int cmd_bench(const BenchArgs& a, const Common& c, const CLI::App* sub) {
  SimConfig cfg = sim_config(a.scenario, a.n, a.bins, a.beta, a.censor, resolve_seed(c.seed));
  cfg.reps = a.reps;
  BenchOptions bo;
  bo.mcmc_iter = a.mcmc_iter;
  bo.mcmc_burn = a.mcmc_burn;
  bo.dbeta_c = a.dbeta_c;
  const fs::path out(c.out);
  ensure_dir(out);
  const auto tab = run_benchmark(cfg, a.estimators, bo);
  const TimeGrid& g = tab.grid;
  {
    std::ofstream os(out / "metrics.csv");
    os << "estimator,bin_index,t_mid,bias,rmse\n";
    for (const auto& r : tab.rows) {
      for (std::size_t j = 0; j < g.bins(); ++j) {
        os << r.estimator << ',' << j << ',' << format_double(g.midpoint(j)) << ',' << num(r.bias[j]) << ','
           << num(r.rmse[j]) << "\n";
      }
    }
  }
  {
    std::ofstream os(out / "integrated.csv");
    os << "estimator,integrated_abs_bias,integrated_rmse,reps_ok,failures,beta_mean\n";
    for (const auto& r : tab.rows) {
      os << r.estimator << ',' << num(r.integrated_abs_bias) << ',' << num(r.integrated_rmse) << ',' << r.reps_ok
         << ',' << r.failures << ',' << (r.beta_mean ? format_double(*r.beta_mean) : std::string("NA")) << "\n";
    }
  }
  {
    std::ofstream os(out / "replicates.csv");
    os << "estimator,rep,bin_index,estimate,missing\n";
    for (const auto& r : tab.rows) {
      for (std::size_t i = 0; i < r.curves.size(); ++i) {
        for (std::size_t j = 0; j < g.bins(); ++j) {
          os << r.estimator << ',' << r.curve_reps[i] << ',' << j << ',' << num(r.curves[i].values[j]) << ','
             << (r.curves[i].is_missing(j) ? 1 : 0) << "\n";
        }
      }
    }
  }
  {
    std::ofstream os(out / "failures.csv");
    os << "estimator,message\n";
    for (const auto& r : tab.rows) {
      for (const auto& e : r.errors) {
        std::string msg = e;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        os << r.estimator << ',' << msg << "\n";
      }
    }
  }
  {
    std::ofstream os(out / "censoring.csv");
    os << "rep,censored_fraction\n";
    for (std::size_t k = 0; k < tab.realized_censoring.size(); ++k) {
      os << k << ',' << format_double(tab.realized_censoring[k]) << "\n";
    }
  }
  {
    std::ofstream os(out / "runtime.txt");
    for (const auto& r : tab.rows) os << r.estimator << " " << r.runtime_s << " s\n";
  }
  Manifest m;
  m.set("command", "bench");
  m.set("version", HAZBENCH_VERSION);
  echo_options(sub, m);
  config_manifest(m, cfg, tab.calibration);
  m.set("reps", std::to_string(cfg.reps));
  std::string ests;
  for (const auto& e : a.estimators) ests += (ests.empty() ? "" : ",") + e;
  m.set("estimators", ests);
  m.set("mcmc_iter", std::to_string(bo.mcmc_iter));
  m.set("mcmc_burn", std::to_string(bo.mcmc_burn));
  m.set("dbeta_c", bo.dbeta_c);
  m.write(out / "manifest.txt");
  if (c.plots) {
    for (std::size_t k = 0; k < tab.rows.size(); ++k) {
      const auto& r = tab.rows[k];
      const std::size_t grp = tab.truth.size() == 1 ? 0 : k % tab.truth.size();
      std::string stem = r.estimator;
      std::replace(stem.begin(), stem.end(), '/', '_');
      write_svg((out / ("cloud_" + stem + ".svg")).string(), cloud_plot(r.curves, tab.truth[grp], g, r.estimator));
    }
  }
  std::size_t completed = 0;
  std::cout << "estimator            int|bias|   intRMSE   ok  failed\n";
  for (const auto& r : tab.rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-18s %10.4f %9.4f %4zu %7zu\n", r.estimator.c_str(), r.integrated_abs_bias,
                  r.integrated_rmse, r.reps_ok, r.failures);
    std::cout << buf;
    if (r.reps_ok > 0) ++completed;
    if (r.failures > 0) std::cerr << "note: " << r.estimator << " failed in " << r.failures << " replicate(s); first: " << r.errors.front() << "\n";
  }
  if (completed == 0) throw EstimatorError("no estimator completed any replicate");
  return 0;
}

int cmd_diagnose(const DiagArgs& a, const Common& c) {
  const ChainSet cs = read_chains(a.chains);
  if (cs.chains.empty()) throw InputError("no chains found in '" + a.chains + "'");
  const auto& first = cs.chains.front();
  std::vector<double> rhat(first.cols(), kNaN);
  if (cs.chains.size() >= 2) rhat = gelman_rubin(cs.chains);
  std::ostringstream csv;
  csv << "parameter,mean,sd,q025,median,q975,ess,mcse";
  for (auto k : a.lags) csv << ",acf_" << k;
  csv << ",rhat,flag\n";
  std::vector<std::string> flagged;
  for (std::size_t p = 0; p < first.cols(); ++p) {
    std::vector<double> all;
    double ess = 0.0, mcse2 = 0.0;
    std::vector<double> acf(a.lags.size(), 0.0);
    for (const auto& ch : cs.chains) {
      const auto col = ch.column(p);
      all.insert(all.end(), col.begin(), col.end());
      ess += effective_sample_size(col);
      const double se = mc_standard_error(col);
      mcse2 += se * se;
      for (std::size_t k = 0; k < a.lags.size(); ++k) acf[k] += autocorrelation(col, a.lags[k]);
    }
    const double nch = static_cast<double>(cs.chains.size());
    std::vector<double> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    const bool flag = std::isfinite(rhat[p]) && rhat[p] > a.threshold;
    if (flag) flagged.push_back(first.labels[p]);
    csv << first.labels[p] << ',' << num(mean(all)) << ',' << num(std::sqrt(variance(all))) << ','
        << num(quantile_sorted(sorted, 0.025)) << ',' << num(quantile_sorted(sorted, 0.5)) << ','
        << num(quantile_sorted(sorted, 0.975)) << ',' << num(ess) << ',' << num(std::sqrt(mcse2) / nch);
    for (double v : acf) csv << ',' << num(v / nch);
    csv << ',' << num(rhat[p]) << ',' << (flag ? 1 : 0) << "\n";
  }
  const fs::path out(c.out);
  ensure_dir(out);
  std::ofstream(out / "diagnostics.csv") << csv.str();
  if (c.plots) {
    for (std::size_t p = 0; p < first.cols(); ++p) {
      SvgPlot plot;
      plot.title = "trace " + first.labels[p];
      plot.xlabel = "kept iteration";
      plot.ylabel = first.labels[p];
      const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
      for (std::size_t k = 0; k < cs.chains.size(); ++k) {
        SvgSeries s{"chain " + std::to_string(k + 1), {}, cs.chains[k].column(p), colors[k % 4], 0.8};
        for (std::size_t i = 0; i < s.y.size(); ++i) s.x.push_back(static_cast<double>(i + 1));
        plot.series.push_back(std::move(s));
      }
      std::string stem = first.labels[p];
      for (auto& ch : stem) {
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_')) ch = '_';
      }
      write_svg((out / ("trace_" + stem + ".svg")).string(), plot);
    }
  }
  std::cout << "chains: " << cs.chains.size() << "  kept rows per chain: " << first.rows()
            << "  parameters: " << first.cols() << "\n";
  if (cs.chains.size() < 2) {
    std::cout << "scale reduction needs at least two chains; not computed\n";
  } else if (flagged.empty()) {
    std::cout << "all parameters have R-hat <= " << format_double(a.threshold) << "\n";
  } else {
    std::cout << "FLAGGED (R-hat > " << format_double(a.threshold) << "):";
    for (const auto& f : flagged) std::cout << " " << f;
    std::cout << "\n";
  }
  return 0;
}

void add_common(CLI::App* s, Common& c) {
  s->add_option("--out", c.out, "output directory");
  s->add_option("--seed", c.seed, "random seed (falls back to HAZBENCH_SEED, then 1)");
  s->add_option("--threads", c.threads, "worker thread cap (0 = hardware)");
  s->add_flag("--plots", c.plots, "write SVG plots");
  s->add_option("--config", c.config, "key=value file; command-line flags take precedence");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hazbench: hazard-rate estimation and benchmarking"};
  app.set_version_flag("--version", HAZBENCH_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  FitArgs fa;
  SimArgs sa;
  BenchArgs ba;
  DiagArgs da;

  auto* fit = app.add_subcommand("fit", "fit one estimator to a CSV dataset");
  add_common(fit, common);
  fit->add_option("--data", fa.data, "CSV file")->required();
  fit->add_option("--model", fa.model, "model formula, e.g. 'Surv(time, status) ~ age + nph(sex)'")->required();
  fit->add_option("--estimator", fa.estimator)
      ->required()
      ->check(CLI::IsMember({"piecewise", "kernel", "presmooth", "spline", "mrh", "dbeta", "timevar", "yp"}));
  fit->add_option("--factor", fa.factors, "expand a categorical column into indicators")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  fit->add_flag("--complete-cases", fa.complete_cases, "drop rows with missing model values");
  fit->add_option("--bins", fa.bins, "number of equal-width bins");
  fit->add_option("--horizon", fa.horizon, "grid end (default: largest observed time)");
  fit->add_option("--alpha", fa.alpha, "interval level is 1 - alpha");
  fit->add_option("--kernel", fa.kernel, "epanechnikov|rectangle|biweight|triweight");
  fit->add_option("--bw", fa.bw, "hazard bandwidth (0 = rule of thumb)");
  fit->add_option("--bw-pre", fa.bw_pre, "presmoothing bandwidth (0 = rule of thumb)");
  fit->add_option("--bw-mode", fa.bw_mode, "global|local|nearest_neighbor");
  fit->add_option("--nn-k", fa.nn_k, "neighbours for nearest_neighbor bandwidths");
  fit->add_option("--bw-candidates", fa.bw_candidates, "bootstrap bandwidth candidates (presmooth)")->delimiter(',');
  fit->add_option("--bootstrap", fa.bootstrap, "bootstrap resamples for bandwidth selection");
  fit->add_option("--bound", fa.bound, "boundary correction: none|left|right|both");
  fit->add_option("--estimand", fa.estimand, "presmooth target: h|H|S");
  fit->add_option("--knots", fa.knots, "spline knots");
  fit->add_option("--degree", fa.degree, "spline degree");
  fit->add_option("--lambda", fa.lambda, "fixed smoothing parameter (default: REML)");
  fit->add_option("--iter", fa.iter, "MCMC iterations");
  fit->add_option("--burn", fa.burn, "MCMC burn-in");
  fit->add_option("--thin", fa.thin, "MCMC thinning");
  fit->add_option("--chains", fa.chains, "MCMC chains");
  fit->add_option("--jitter", fa.jitter, "sd of starting-value jitter");
  fit->add_option("--split-a", fa.split_a, "MRH split prior shape");
  fit->add_option("--H-shape", fa.H_shape, "MRH total hazard gamma shape");
  fit->add_option("--H-rate", fa.H_rate, "MRH total hazard gamma rate");
  fit->add_option("--beta-var", fa.beta_var, "MRH normal prior variance of beta");
  fit->add_option("--c", fa.c, "dbeta link intensity");
  fit->add_flag("--random-c", fa.random_c, "dbeta: Poisson(c) link sizes");
  fit->add_option("--prior-shape", fa.prior_shape, "dbeta Beta prior shapes");
  fit->add_option("--discretize", fa.discretize, "dbeta time discretization: round|ceiling");
  fit->add_option("--unit", fa.unit, "dbeta period length (default: bin width)");
  fit->add_option("--smooth-b", fa.smooth_b, "timevar decumulation bandwidth (0 = twice the widest interval)");
  fit->add_option("--pred-points", fa.pred_points, "timevar prediction points");
  fit->add_option("--resamples", fa.resamples, "timevar wild-bootstrap resamples");
  fit->add_option("--band-draws", fa.band_draws, "yp simultaneous band draws");
  fit->add_flag("--swap-groups", fa.swap_groups, "yp: level 0 is the treatment group");

  auto* sim = app.add_subcommand("simulate", "generate one simulated dataset");
  add_common(sim, common);
  sim->add_option("--scenario", sa.scenario, "PH|NPH");
  sim->add_option("--n", sa.n, "subjects");
  sim->add_option("--bins", sa.bins, "bins of the truth table");
  sim->add_option("--rep", sa.rep, "replicate index");
  sim->add_option("--beta", sa.beta, "true proportional effect");
  sim->add_option("--censor", sa.censor, "censoring target(s) per group")->delimiter(',');

  auto* bench = app.add_subcommand("bench", "simulation benchmark of several estimators");
  add_common(bench, common);
  bench->add_option("--scenario", ba.scenario, "PH|NPH");
  bench->add_option("--n", ba.n, "subjects per replicate");
  bench->add_option("--reps", ba.reps, "replicates");
  bench->add_option("--bins", ba.bins, "bins");
  bench->add_option("--beta", ba.beta, "true proportional effect");
  bench->add_option("--censor", ba.censor, "censoring target(s) per group")->delimiter(',');
  bench->add_option("--estimators", ba.estimators, "comma-separated estimator list")->delimiter(',');
  bench->add_option("--mcmc-iter", ba.mcmc_iter, "MCMC iterations per fit");
  bench->add_option("--mcmc-burn", ba.mcmc_burn, "MCMC burn-in per fit");
  bench->add_option("--dbeta-c", ba.dbeta_c, "dbeta link intensity");

  auto* diag = app.add_subcommand("diagnose", "MCMC diagnostics for a chain directory");
  add_common(diag, common);
  diag->add_option("--chains,chains", da.chains, "directory with chains_header.txt")->required();
  diag->add_option("--lags", da.lags, "autocorrelation lags")->delimiter(',');
  diag->add_option("--threshold", da.threshold, "R-hat flag threshold");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    // config values go right after the subcommand so explicit flags override them
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string path;
      if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
      if (path.empty()) continue;
      auto extra = config_args(path);
      const auto at = args.empty() ? args.begin() : args.begin() + 1;
      args.insert(at, extra.begin(), extra.end());
      break;
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (common.threads > 0) thread_limit().store(static_cast<unsigned>(common.threads));
    if (fit->parsed()) return cmd_fit(fa, common, fit);
    if (sim->parsed()) return cmd_simulate(sa, common, sim);
    if (bench->parsed()) return cmd_bench(ba, common, bench);
    if (diag->parsed()) return cmd_diagnose(da, common);
  } catch (const FormulaError& e) {
    std::cerr << "input error: " << e.what() << " (at character " << e.offset() << ")\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const EstimatorError& e) {
    std::cerr << "estimator error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "estimator error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
