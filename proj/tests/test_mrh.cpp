#include <gtest/gtest.h>

#include <boost/math/distributions/gamma.hpp>
#include <cmath>
#include <filesystem>

#include "hazbench/hazbench.hpp"

using namespace hazbench;

namespace {

// Exponential(rate) failures, exponential censoring; "trt" = i % 2 scales the
// hazard by exp(beta).
SurvDataset exp_data(std::uint64_t seed, std::size_t n, double rate, double censor_rate, double beta = 0.0,
                     bool with_trt = false) {
  Rng rng(seed);
  std::vector<SurvRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = static_cast<double>(i % 2);
    const double T = -std::log(rng.uniform()) / (rate * std::exp(beta * g));
    const double C = -std::log(rng.uniform()) / censor_rate;
    SurvRecord r{std::min(T, C), T <= C ? 1 : 0, {}};
    if (with_trt) r.covariates.push_back(g);
    recs.push_back(r);
  }
  return with_trt ? SurvDataset(recs, {"trt"}) : SurvDataset(recs);
}

ModelFormula bare() {
  ModelFormula f;
  f.time_col = "time";
  f.event_col = "status";
  return f;
}

MCMCControl ctrl(std::size_t iter, std::size_t burn, std::uint64_t seed = 1) {
  MCMCControl c;
  c.n_iter = iter;
  c.n_burn = burn;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Mrh, SingleBinConjugateGamma) {
  const auto d = exp_data(1, 300, 0.7, 0.4);
  MRHPriors pr;
  pr.H_shape = 2.0;
  pr.H_rate = 1.0;
  const auto ch = fit_mrh(d, bare(), 0, pr, ctrl(21000, 1000, 5));
  ASSERT_EQ(ch.labels, std::vector<std::string>{"H_s1"});
  const double tau = d.max_time();
  double events = 0.0, R = 0.0;
  for (const auto& r : d.records()) {
    events += r.event;
    R += r.time;
  }
  // H is the mass over (0, tau]; the rate is H / tau
  const double shape = pr.H_shape + events, rate = pr.H_rate + R / tau;
  const auto H = ch.column("H_s1");
  EXPECT_NEAR(mean(H), shape / rate, 2.0 * mc_standard_error(H));

  boost::math::gamma_distribution<double> post(shape, 1.0 / rate);
  const auto grid = TimeGrid::equal_width(0.0, tau, 1);
  const auto s = summarize_chains(ch, 0.05, grid);
  const double n = static_cast<double>(H.size());
  for (double p : {0.025, 0.5, 0.975}) {
    const double q = boost::math::quantile(post, p);
    // sd of a sample quantile: sqrt(p(1-p)/n) / f(q)
    const double se = std::sqrt(p * (1.0 - p) / n) / boost::math::pdf(post, q) / tau;
    const double got = p == 0.5 ? s.hazards[0].values[0] : (p < 0.5 ? s.hazards[0].lower[0] : s.hazards[0].upper[0]);
    EXPECT_NEAR(got, q / tau, 4.0 * se) << p;
  }
}

TEST(Mrh, IncrementsSumToTotal) {
  const auto d = exp_data(2, 200, 1.0, 0.5);
  MRHOptions o;
  o.M = 4;
  MRHSampler s(d, {}, {}, {}, o);
  Rng rng(3);
  for (int it = 0; it < 50; ++it) {
    s.step(rng, true);
    const auto row = s.parameters();
    const auto inc = s.increments(0, row[0], nullptr, 0.0);
    double sum = 0.0;
    for (double v : inc) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, row[0], 1e-12 * row[0]);
  }
  // the same identity through stored draws
  const auto ch = fit_mrh(d, bare(), 3, {}, ctrl(300, 100));
  const auto draws = mrh_hazard_draws(ch);
  const double w = d.max_time() / 8.0;
  for (std::size_t r = 0; r < ch.rows(); ++r) {
    double sum = 0.0;
    for (double h : draws[0][r]) sum += h * w;
    EXPECT_NEAR(sum, ch.at(r, 0), 1e-12 * ch.at(r, 0));
  }
}

TEST(Mrh, PriorOnlyRecoversSplitMean) {
  const auto d = exp_data(3, 50, 1.0, 0.5);
  MRHOptions o;
  o.M = 2;
  o.prior_only = true;
  MRHPriors pr;
  pr.split_a = 2.0;
  auto c = ctrl(22000, 2000, 9);
  const auto ch = fit_mrh_chains(d, bare(), pr, c, o).front();
  for (const char* lab : {"R_s1_n1", "R_s1_n2", "R_s1_n3"}) {
    const auto x = ch.column(lab);
    EXPECT_NEAR(mean(x), 0.5, 2.0 * mc_standard_error(x)) << lab;
    // Beta(2, 2) variance 1/20
    EXPECT_NEAR(variance(x), 0.05, 0.01) << lab;
  }
  // Gamma(0.01, 0.01) prior on H: mean 1
  const auto H = ch.column("H_s1");
  EXPECT_NEAR(mean(H), 1.0, 0.5);
}

TEST(Mrh, LogPosteriorMatchesDirectLikelihood) {
  // Metropolis ratios are differences of log_posterior; check it against a
  // per-subject evaluation of the likelihood on random parameter pairs.
  const auto d = exp_data(4, 120, 0.8, 0.5, 0.3, true);
  MRHOptions o;
  o.M = 3;
  MRHPriors pr;
  pr.split_a = 1.5;
  MRHSampler s(d, {0}, {"trt"}, pr, o);
  const double tau = d.max_time(), w = tau / 8.0;
  double xbar = 0.0;
  for (const auto& r : d.records()) xbar += r.covariates[0] / static_cast<double>(d.size());

  auto direct = [&](const std::vector<double>& row) {
    const double H = row[0], beta = row[8];
    std::vector<double> mass(16);
    mass[1] = H;
    for (std::size_t n = 1; n < 8; ++n) {
      mass[2 * n] = mass[n] * row[n];
      mass[2 * n + 1] = mass[n] * (1.0 - row[n]);
    }
    double ll = 0.0;
    for (const auto& r : d.records()) {
      const double eb = std::exp(beta * r.covariates[0]);
      double cum = 0.0;
      std::size_t bin = 0;
      for (std::size_t j = 0; j < 8; ++j) {
        const double lo = w * static_cast<double>(j), hi = w * static_cast<double>(j + 1);
        const double lam = mass[8 + j] / w;
        if (r.time > lo) cum += lam * (std::min(r.time, hi) - lo);
        if (r.time > lo && r.time <= hi) bin = j;
      }
      if (r.event) ll += std::log(mass[8 + bin] / w) + beta * r.covariates[0];
      ll -= eb * cum;
    }
    // priors on the sampling scale: centred mass Hc = H exp(xbar beta), log H and logit R
    const double Hc = H * std::exp(xbar * beta);
    double lp = (pr.H_shape - 1.0) * std::log(Hc) - pr.H_rate * Hc + std::log(Hc);
    for (std::size_t n = 1; n < 8; ++n) lp += pr.split_a * (std::log(row[n]) + std::log1p(-row[n]));
    lp -= 0.5 * beta * beta / pr.beta_var;
    return ll + lp;
  };

  Rng rng(8);
  auto random_row = [&] {
    std::vector<double> row{std::exp(rng.normal())};
    for (int n = 1; n < 8; ++n) row.push_back(rng.uniform(0.05, 0.95));
    row.push_back(rng.normal() * 0.5);
    return row;
  };
  for (int k = 0; k < 20; ++k) {
    const auto x = random_row(), y = random_row();
    s.set_parameters(x);
    const double lx = s.log_posterior();
    const auto back = s.parameters();
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-12 * std::abs(x[i]) + 1e-15);
    s.set_parameters(y);
    const double ly = s.log_posterior();
    // forward and reverse log acceptance ratios are exact negatives
    const double fwd = ly - lx, rev = lx - ly;
    EXPECT_EQ(fwd, -rev);
    EXPECT_NEAR(fwd, direct(y) - direct(x), 1e-8 * (1.0 + std::abs(fwd)));
  }
}

TEST(Mrh, FlatterPriorsApproachPiecewiseMle) {
  const auto d = exp_data(5, 600, 1.0, 0.3);
  const auto grid = TimeGrid::equal_width(0.0, d.max_time(), 4);
  const auto mle = piecewise_mle(bin_occurrence_exposure(d, grid));
  std::vector<double> sup;
  for (double a : {500.0, 20.0, 1.0}) {
    MRHPriors pr;
    pr.split_a = a;
    const auto ch = fit_mrh(d, bare(), 2, pr, ctrl(6000, 1000, 4));
    const auto s = summarize_chains(ch, 0.05, grid);
    double m = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      if (mle.is_missing(j)) continue;
      m = std::max(m, std::abs(s.hazards[0].values[j] - mle.values[j]));
    }
    sup.push_back(m);
  }
  EXPECT_GT(sup[0], sup[1]);
  EXPECT_GT(sup[1], sup[2]);
}

TEST(Mrh, LabelsAndRowCount) {
  auto d = with_strata(exp_data(6, 200, 1.0, 0.5, 0.0, true), {"trt"});
  auto c = ctrl(1100, 100);
  c.n_thin = 3;
  MRHOptions o;
  o.M = 2;
  const auto ch = fit_mrh_chains(exp_data(6, 200, 1.0, 0.5, 0.0, true), parse_formula("Surv(t, d) ~ nph(trt)"), {},
                                 c, o)
                      .front();
  EXPECT_EQ(ch.rows(), c.kept());
  EXPECT_EQ(ch.rows(), 333u);
  const std::vector<std::string> want{"H_s1", "R_s1_n1", "R_s1_n2", "R_s1_n3", "H_s2", "R_s2_n1", "R_s2_n2", "R_s2_n3"};
  EXPECT_EQ(ch.labels, want);
  EXPECT_EQ(d.n_strata(), 2u);
}

TEST(Mrh, PhSimulationRecoversBeta) {
  SimConfig c = SimConfig::ph_defaults();
  c.n = 1000;
  c.seed = 21;
  const auto d = generate_dataset(c, 0);
  MRHOptions o;
  o.horizon = c.horizon;  // bins line up with the comparison grid
  const auto ch = fit_mrh(d, parse_formula("Surv(time, status) ~ trt"), 5, {}, ctrl(4000, 1000, 2), o);
  const auto s = summarize_chains(ch, 0.05, c.grid());
  ASSERT_EQ(s.hazards.size(), 1u);
  EXPECT_EQ(s.hazards[0].size(), 32u);
  ASSERT_EQ(s.beta_names, std::vector<std::string>{"trt"});
  EXPECT_NEAR(s.beta_median[0], -0.5, 0.2);
  EXPECT_LT(s.beta_lower[0], s.beta_median[0]);
  EXPECT_GT(s.beta_upper[0], s.beta_median[0]);
}

TEST(Mrh, SummaryDegenerateAndIdenticalStrata) {
  PosteriorChains pc;
  pc.labels = {"H_s1", "R_s1_n1", "H_s2", "R_s2_n1", "x"};
  pc.meta = {{"M", 1.0}, {"horizon", 2.0}, {"n_strata", 2.0}};
  for (int r = 0; r < 50; ++r) pc.samples.insert(pc.samples.end(), {3.0, 0.25, 3.0, 0.25, 0.1});
  const auto s = summarize_chains(pc, 0.1, TimeGrid::equal_width(0.0, 2.0, 2));
  ASSERT_EQ(s.hazards.size(), 2u);
  EXPECT_DOUBLE_EQ(s.hazards[0].values[0], 0.75);
  EXPECT_DOUBLE_EQ(s.hazards[0].values[1], 2.25);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(s.hazards[0].lower[j], s.hazards[0].values[j]);
    EXPECT_EQ(s.hazards[0].upper[j], s.hazards[0].values[j]);
    EXPECT_EQ(s.log_ratios[0].values[j], 0.0);
    EXPECT_EQ(s.log_ratios[0].lower[j], 0.0);
    EXPECT_EQ(s.log_ratios[0].upper[j], 0.0);
  }
  EXPECT_EQ(s.beta_median, std::vector<double>{0.1});
  EXPECT_THROW(summarize_chains(pc, 0.1, TimeGrid::equal_width(0.0, 2.0, 4)), InputError);
}

TEST(Mrh, LogRatioFormedPerIteration) {
  // stratum 2 is always twice stratum 1, though both vary: the ratio is exact
  PosteriorChains pc;
  pc.labels = {"H_s1", "H_s2"};
  pc.meta = {{"M", 0.0}, {"horizon", 1.0}, {"n_strata", 2.0}};
  Rng rng(1);
  for (int r = 0; r < 200; ++r) {
    const double h = std::exp(rng.normal());
    pc.samples.insert(pc.samples.end(), {h, 2.0 * h});
  }
  const auto s = summarize_chains(pc, 0.05, TimeGrid::equal_width(0.0, 1.0, 1));
  EXPECT_NEAR(s.log_ratios[0].values[0], std::log(2.0), 1e-12);
  EXPECT_NEAR(s.log_ratios[0].upper[0] - s.log_ratios[0].lower[0], 0.0, 1e-12);
}

TEST(Diagnostics, GelmanRubinIdenticalChains) {
  const auto d = exp_data(7, 200, 1.0, 0.5);
  const auto ch = fit_mrh(d, bare(), 2, {}, ctrl(600, 100));
  const std::vector<PosteriorChains> two{ch, ch};
  const auto g = gelman_rubin(two);
  const double n = static_cast<double>(ch.rows());
  for (double v : g) {
    // the standard estimator's (n-1)/n factor leaves it just below 1
    EXPECT_NEAR(v, std::sqrt((n - 1.0) / n), 1e-12);
    EXPECT_LT(v, 1.1);
  }
  EXPECT_THROW(gelman_rubin({ch}), InputError);
}

TEST(Diagnostics, GelmanRubinConstantColumnIsNaN) {
  PosteriorChains a;
  a.labels = {"x", "y"};
  a.samples = {1.0, 0.0, 1.0, 1.0, 1.0, 2.0};
  auto b = a;
  b.samples = {1.0, 5.0, 1.0, 6.0, 1.0, 4.0};
  const auto g = gelman_rubin({a, b});
  EXPECT_TRUE(std::isnan(g[0]));
  EXPECT_GT(g[1], 1.1);
}

TEST(Diagnostics, GelmanRubinConvergedAndDispersed) {
  const auto d = exp_data(8, 300, 1.0, 0.5);
  MRHOptions o;
  o.M = 2;
  auto c = ctrl(6000, 1000, 11);
  c.n_chains = 3;
  c.init_jitter = 1.0;
  for (double v : gelman_rubin(fit_mrh_chains(d, bare(), {}, c, o))) EXPECT_LT(v, 1.1);

  c.n_iter = 10;
  c.n_burn = 0;
  c.n_chains = 4;
  c.init_jitter = 4.0;
  const auto short_runs = fit_mrh_chains(d, bare(), {}, c, o);
  const auto g = gelman_rubin(short_runs);
  EXPECT_GT(g[short_runs[0].index_of("H_s1")], 1.1);
}

TEST(Diagnostics, EssAndMcseOnIidDraws) {
  Rng rng(12);
  std::vector<double> x(20000);
  for (auto& v : x) v = rng.normal();
  EXPECT_GT(effective_sample_size(x), 15000.0);
  EXPECT_NEAR(mc_standard_error(x), 1.0 / std::sqrt(20000.0), 0.3 / std::sqrt(20000.0));
  // AR(1) with rho 0.9: ESS about n (1 - rho) / (1 + rho)
  std::vector<double> y(20000);
  y[0] = rng.normal();
  for (std::size_t i = 1; i < y.size(); ++i) y[i] = 0.9 * y[i - 1] + std::sqrt(1 - 0.81) * rng.normal();
  EXPECT_NEAR(effective_sample_size(y) / (20000.0 * 0.1 / 1.9), 1.0, 0.3);
  EXPECT_NEAR(autocorrelation(y, 1), 0.9, 0.02);
}

TEST(Continue, MatchesUninterruptedRunBitwise) {
  const auto d = exp_data(9, 200, 1.0, 0.5, -0.5, true);
  const auto f = parse_formula("Surv(t, d) ~ trt");
  MRHOptions o;
  o.M = 3;
  const auto full = fit_mrh_chains(d, f, {}, ctrl(2000, 500, 3), o).front();
  const auto half = fit_mrh_chains(d, f, {}, ctrl(1000, 500, 3), o).front();
  MCMCControl extra;
  extra.n_iter = 1000;
  const auto cont = continue_chain(half, extra);
  ASSERT_EQ(cont.rows(), full.rows());
  EXPECT_EQ(cont.samples, full.samples);
  EXPECT_EQ(cont.control.n_iter, 2000u);

  extra.n_iter = 0;
  const auto same = continue_chain(half, extra);
  EXPECT_EQ(same.samples, half.samples);
  EXPECT_EQ(same.state.rng, half.state.rng);
}

TEST(Continue, ScalesFrozenAfterBurnIn) {
  const auto d = exp_data(10, 200, 1.0, 0.5);
  const auto ch = fit_mrh(d, bare(), 3, {}, ctrl(800, 400, 2));
  ASSERT_TRUE(ch.state.frozen());
  const auto before = ch.state.sampler->proposal_scales();
  ASSERT_FALSE(before.empty());
  MCMCControl extra;
  extra.n_iter = 500;
  const auto after = continue_chain(ch, extra).state.sampler->proposal_scales();
  EXPECT_EQ(before, after);
}

TEST(Continue, RejectsMissingOrMismatchedState) {
  PosteriorChains empty;
  EXPECT_THROW(continue_chain(empty, {}), InputError);
  const auto d = exp_data(10, 100, 1.0, 0.5);
  auto ch = fit_mrh(d, bare(), 1, {}, ctrl(200, 100));
  ch.labels.push_back("extra");
  EXPECT_THROW(continue_chain(ch, {}), InputError);
  ch = fit_mrh(d, bare(), 1, {}, ctrl(200, 100));
  ch.state.version = 99;
  EXPECT_THROW(continue_chain(ch, {}), InputError);
}

TEST(Persistence, WriteReadRoundTrip) {
  const auto d = exp_data(13, 150, 1.0, 0.5, 0.2, true);
  auto c = ctrl(400, 100, 77);
  c.n_chains = 2;
  MRHOptions o;
  o.M = 2;
  const auto chains = fit_mrh_chains(d, parse_formula("Surv(t, d) ~ trt"), {}, c, o);
  const auto dir = std::filesystem::path(HAZBENCH_TMP_DIR) / "mrh_roundtrip";
  std::filesystem::remove_all(dir);
  write_chains(dir, chains, "mrh", {{"formula", "Surv(t, d) ~ trt"}});
  const auto back = read_chains(dir);
  ASSERT_EQ(back.chains.size(), 2u);
  EXPECT_EQ(back.header.at("sampler"), "mrh");
  EXPECT_EQ(back.header.at("seed"), "77");
  EXPECT_EQ(back.header.at("M"), "2");
  EXPECT_EQ(back.header.at("formula"), "Surv(t, d) ~ trt");
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back.chains[k].labels, chains[k].labels);
    EXPECT_EQ(back.chains[k].samples, chains[k].samples);
  }
  EXPECT_THROW(read_chains(dir / "nope"), InputError);
}

TEST(Mrh, Errors) {
  // stratum trt=1 has no events
  std::vector<SurvRecord> recs{{1.0, 1, {0.0}}, {2.0, 0, {1.0}}, {3.0, 1, {0.0}}, {2.5, 0, {1.0}}};
  const SurvDataset d(recs, {"trt"});
  EXPECT_THROW(fit_mrh(d, parse_formula("Surv(t, d) ~ nph(trt)"), 1, {}, ctrl(100, 10)), EstimatorError);
  MRHOptions o;
  o.horizon = 2.0;
  EXPECT_THROW(fit_mrh(d, parse_formula("Surv(t, d) ~ trt"), 1, {}, ctrl(100, 10), o), InputError);
  MRHPriors bad;
  bad.H_rate = 0.0;
  EXPECT_THROW(fit_mrh(d, parse_formula("Surv(t, d) ~ trt"), 1, bad, ctrl(100, 10)), InputError);
  EXPECT_THROW(fit_mrh(d, parse_formula("Surv(t, d) ~ trt"), 1, {}, ctrl(100, 100)), InputError);
}
