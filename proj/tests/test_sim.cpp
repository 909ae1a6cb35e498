#include <gtest/gtest.h>

#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hazbench/hazbench.hpp"

using namespace hazbench;

namespace {

HazardCurve constant_curve(const TimeGrid& g, double v) { return HazardCurve(g, std::vector<double>(g.bins(), v)); }

// truth that is flat at `v` so bias/rmse offsets are easy to read off
TrueHazardSpec flat(double v) { return TrueHazardSpec::flat_at(v); }

}  // namespace

TEST(TrueHazard, PeakedShapeAndCumulative) {
  const auto s = TrueHazardSpec::peaked();
  EXPECT_NEAR(s.hazard(0.75), 0.6, 1e-15);
  EXPECT_LT(s.hazard(0.5), 0.6);
  EXPECT_LT(s.hazard(1.0), 0.6);
  EXPECT_EQ(s.hazard(0.0), 0.0);
  for (double t : {0.1, 0.75, 2.0, 5.0, 10.0}) {
    const double q = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double x) { return s.hazard(x); }, 0.0, t, 15, 1e-14);
    EXPECT_NEAR(s.cumulative(t), q, 1e-12) << t;
  }
  for (double t : {0.01, 0.5, 3.0, 9.99}) EXPECT_NEAR(s.inverse_cumulative(s.cumulative(t)), t, 1e-10);
  EXPECT_TRUE(std::isinf(s.inverse_cumulative(s.cumulative(10.0) * 1.001)));
  // the flat group starts above, is overtaken inside year 2, and ends above again
  const auto f = flat(0.15);
  EXPECT_GT(f.hazard(0.01), s.hazard(0.01));
  EXPECT_LT(f.hazard(1.0), s.hazard(1.0));
  EXPECT_GT(f.hazard(3.0), s.hazard(3.0));
}

TEST(TrueHazard, PiecewiseForm) {
  TrueHazardSpec s;
  s.form = HazardForm::piecewise;
  s.edges = {0.0, 1.0, 3.0};
  s.values = {0.2, 0.5};
  s.validate();
  EXPECT_EQ(s.hazard(0.5), 0.2);
  EXPECT_EQ(s.hazard(2.0), 0.5);
  EXPECT_NEAR(s.cumulative(2.0), 0.2 + 0.5, 1e-15);
  EXPECT_NEAR(s.cumulative(4.0), 0.2 + 1.0 + 0.5, 1e-15);
  EXPECT_NEAR(s.inverse_cumulative(0.7), 2.0, 1e-10);
  s.values = {0.2};
  EXPECT_THROW(s.validate(), InputError);
  EXPECT_THROW(flat(0.0).validate(), InputError);
}

TEST(Generator, FlatTruthLawOfLargeNumbers) {
  SimConfig c;
  c.n = 100000;
  c.beta_true = 0.0;
  c.horizon = 100.0;
  c.censor_targets = {0.0};
  c.seed = 11;
  const std::vector<TrueHazardSpec> truth{TrueHazardSpec::flat_at(0.15, 100.0)};
  const auto cal = calibrate_all(truth, c);
  ASSERT_TRUE(cal[0].at_floor);
  const auto d = generate_dataset(truth, c, 0, &cal);
  const auto na = nelson_aalen(d);
  const RiskTable rt = risk_table(d);
  for (double t : {0.5, 1.0, 2.0, 5.0, 10.0, 20.0}) {
    double var = 0.0;
    for (std::size_t i = 0; i < rt.times.size() && rt.times[i] <= t; ++i) var += rt.deaths[i] / (rt.at_risk[i] * rt.at_risk[i]);
    EXPECT_NEAR(na.step_at(t, 0.0), 0.15 * t, 3.0 * std::sqrt(var)) << t;
  }
}

TEST(Generator, SurvivalMatchesTruthAtDeciles) {
  SimConfig c;
  c.n = 100000;
  c.beta_true = 0.0;
  c.censor_targets = {0.29};  // just under the administrative floor: no random censoring
  c.seed = 12;
  const auto truth = default_truth(c);
  const auto cal = calibrate_all(truth, c);
  ASSERT_TRUE(cal[0].at_floor);
  const auto d = generate_dataset(truth, c, 0, &cal);
  const auto km = kaplan_meier(d);
  const double n = static_cast<double>(c.n);
  for (double S : {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3}) {
    const double t = truth[0].inverse_cumulative(-std::log(S));
    EXPECT_NEAR(km.step_at(t, 1.0), S, 3.0 * std::sqrt(S * (1.0 - S) / n)) << S;
  }
}

TEST(Generator, CalibratedCensoringPH) {
  SimConfig c;
  const auto cal = calibrate_all(default_truth(c), c);
  EXPECT_NEAR(cal[0].expected, 0.63, 0.005 * 0.63);
  EXPECT_FALSE(cal[0].at_floor);
  double sum = 0.0;
  const std::size_t reps = 20;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto d = generate_dataset(default_truth(c), c, r, &cal);
    ASSERT_EQ(d.size(), c.n);
    sum += 1.0 - static_cast<double>(d.n_events()) / static_cast<double>(d.size());
    for (const auto& rec : d.records()) {
      ASSERT_LE(rec.time, c.horizon);
      ASSERT_GT(rec.time, 0.0);
    }
  }
  EXPECT_NEAR(sum / reps, 0.63, 0.03);
}

TEST(Generator, CalibratedCensoringNPHGroups) {
  auto c = SimConfig::nph_defaults();
  const auto truth = default_truth(c);
  const auto cal = calibrate_all(truth, c);
  ASSERT_EQ(cal.size(), 2u);
  std::array<double, 2> cens{0, 0}, cnt{0, 0};
  for (std::size_t r = 0; r < 20; ++r) {
    const auto d = generate_dataset(truth, c, r, &cal);
    EXPECT_EQ(d.covariate_names(), (std::vector<std::string>{"trt", "sex"}));
    for (const auto& rec : d.records()) {
      const auto g = static_cast<std::size_t>(rec.covariates[0]);
      cens[g] += rec.event ? 0.0 : 1.0;
      cnt[g] += 1.0;
    }
  }
  EXPECT_NEAR(cens[0] / cnt[0], 0.63, 0.03);
  EXPECT_NEAR(cens[1] / cnt[1], 0.30, 0.03);
}

TEST(Generator, DeterministicStreams) {
  SimConfig c;
  c.n = 200;
  const auto a = generate_dataset(c, 3), b = generate_dataset(c, 3), o = generate_dataset(c, 4);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.records()[i].time, b.records()[i].time);
    EXPECT_EQ(a.records()[i].covariates, b.records()[i].covariates);
    differs |= a.records()[i].time != o.records()[i].time;
  }
  EXPECT_TRUE(differs);
  // covariate cells balanced
  EXPECT_EQ(a.records()[0].covariates[0], 0.0);
  EXPECT_EQ(a.records()[1].covariates[0], 1.0);
}

TEST(Generator, Errors) {
  SimConfig c;
  c.censor_targets = {0.05};  // below the administrative floor
  EXPECT_THROW(generate_dataset(c, 0), InputError);
  c = SimConfig{};
  c.n = 3;
  EXPECT_THROW(c.validate(), InputError);
  c = SimConfig::nph_defaults();
  c.censor_targets = {0.5};
  EXPECT_THROW(c.validate(), InputError);
  c = SimConfig{};
  c.censor_targets = {1.0};
  EXPECT_THROW(c.validate(), InputError);
  c = SimConfig{};
  c.reps = 0;
  EXPECT_THROW(c.validate(), InputError);
  EXPECT_THROW(parse_scenario("XX"), InputError);
}

TEST(Metrics, BiasAndRmseExamples) {
  const auto g = TimeGrid::equal_width(0.0, 10.0, 8);
  const auto t = flat(0.3);
  for (double v : bias({constant_curve(g, 0.3)}, t, g)) EXPECT_EQ(v, 0.0);
  for (double v : rmse({constant_curve(g, 0.3)}, t, g)) EXPECT_EQ(v, 0.0);
  for (double v : bias({constant_curve(g, 0.4)}, t, g)) EXPECT_NEAR(v, -0.1, 1e-15);
  for (double v : rmse({constant_curve(g, 0.4)}, t, g)) EXPECT_NEAR(v, 0.1, 1e-15);
  const std::vector<HazardCurve> pm{constant_curve(g, 0.4), constant_curve(g, 0.2)};
  for (double v : bias(pm, t, g)) EXPECT_NEAR(v, 0.0, 1e-15);
  for (double v : rmse(pm, t, g)) EXPECT_NEAR(v, 0.1, 1e-15);
  const std::vector<HazardCurve> z2{constant_curve(g, 0.3), constant_curve(g, 0.1)};
  for (double v : rmse(z2, t, g)) EXPECT_NEAR(v, 0.14142135623730951, 1e-12);
  // truth evaluated at the midpoint
  const auto peaked = TrueHazardSpec::peaked();
  const auto b = bias({constant_curve(g, 0.0)}, peaked, g);
  for (std::size_t j = 0; j < g.bins(); ++j) EXPECT_EQ(b[j], peaked.hazard(g.midpoint(j)));
}

TEST(Metrics, MissingBinsAndGridMismatch) {
  const auto g = TimeGrid::equal_width(0.0, 10.0, 4);
  auto a = constant_curve(g, 0.5);
  a.set_missing(3);
  const auto b = constant_curve(g, 0.7);
  const auto r = bias({a, b}, flat(0.5), g);
  EXPECT_NEAR(r[0], -0.1, 1e-15);
  EXPECT_NEAR(r[3], -0.2, 1e-15);
  auto c = a;
  c.set_missing(0);
  const auto only = bias({c}, flat(0.5), g);
  EXPECT_TRUE(std::isnan(only[0]));
  EXPECT_THROW(bias({constant_curve(TimeGrid::equal_width(0.0, 10.0, 5), 0.1)}, flat(0.5), g), InputError);
}

TEST(Metrics, IntegratedValues) {
  const auto g = TimeGrid::equal_width(0.0, 10.0, 32);
  EXPECT_EQ(integrate_abs(std::vector<double>(32, 0.0), g), 0.0);
  EXPECT_NEAR(integrate_abs(std::vector<double>(32, -0.1), g), 1.0, 1e-12);
  // a fixed piecewise function, then the same function on a refined grid
  const TimeGrid coarse({0.0, 1.0, 4.0, 10.0});
  const std::vector<double> v{0.3, -0.2, 0.05};
  std::vector<double> fine_edges{0.0};
  std::vector<double> fv;
  for (std::size_t k = 0; k < 3; ++k) {
    const double lo = coarse.edges()[k], hi = coarse.edges()[k + 1];
    for (int s = 1; s <= 4; ++s) {
      fine_edges.push_back(lo + (hi - lo) * s / 4.0);
      fv.push_back(v[k]);
    }
  }
  EXPECT_NEAR(integrate_abs(v, coarse), integrate_abs(fv, TimeGrid(fine_edges)), 1e-12);
  EXPECT_NEAR(integrate_abs(v, coarse), 0.3 + 0.6 + 0.3, 1e-12);
  const auto im = integrated_metrics(std::vector<double>(32, 0.1), std::vector<double>(32, 0.2), g);
  EXPECT_NEAR(im.abs_bias, 1.0, 1e-12);
  EXPECT_NEAR(im.rmse, 2.0, 1e-12);
  EXPECT_THROW(integrate_abs({1.0}, g), InputError);
}

TEST(Benchmark, SmokeAndInvariants) {
  SimConfig c;
  c.n = 400;
  c.reps = 3;
  c.seed = 5;
  const auto tab = run_benchmark(c, {"piecewise", "kernel"});
  ASSERT_EQ(tab.rows.size(), 2u);
  EXPECT_EQ(tab.realized_censoring.size(), 3u);
  ASSERT_EQ(tab.truth.size(), 1u);
  for (const auto& row : tab.rows) {
    EXPECT_EQ(row.reps_ok, 3u);
    EXPECT_EQ(row.failures, 0u);
    EXPECT_GE(row.runtime_s, 0.0);
    ASSERT_EQ(row.bias.size(), 32u);
    EXPECT_EQ(row.curves.size(), 3u);
    EXPECT_TRUE(std::isfinite(row.rmse[0]));
    for (std::size_t j = 0; j < 32; ++j) {
      if (std::isnan(row.rmse[j])) continue;
      EXPECT_GE(row.rmse[j], std::abs(row.bias[j]) * (1 - 1e-12));
    }
    EXPECT_NEAR(row.integrated_rmse, integrate_abs(row.rmse, tab.grid), 1e-12);
    EXPECT_NEAR(row.integrated_abs_bias, integrate_abs(row.bias, tab.grid), 1e-12);
  }
  EXPECT_THROW(tab.row("spline"), InputError);
  EXPECT_THROW(run_benchmark(c, {"nope"}), InputError);
  EXPECT_THROW(run_benchmark(c, {}), InputError);
}

TEST(Benchmark, DeterministicAndThreadInvariant) {
  SimConfig c;
  c.n = 300;
  c.reps = 4;
  c.seed = 9;
  const unsigned saved = thread_limit();
  thread_limit() = 1;
  const auto a = run_benchmark(c, {"piecewise", "spline"});
  thread_limit() = 4;
  const auto b = run_benchmark(c, {"piecewise", "spline"});
  thread_limit() = saved;
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    const auto& x = a.rows[k];
    const auto& y = b.rows[k];
    EXPECT_EQ(x.estimator, y.estimator);
    for (std::size_t j = 0; j < x.bias.size(); ++j) {
      if (std::isnan(x.bias[j])) {
        EXPECT_TRUE(std::isnan(y.bias[j]));
        continue;
      }
      EXPECT_EQ(x.bias[j], y.bias[j]);
      EXPECT_EQ(x.rmse[j], y.rmse[j]);
    }
    EXPECT_EQ(x.integrated_rmse, y.integrated_rmse);
    EXPECT_EQ(x.beta_mean.has_value(), y.beta_mean.has_value());
    if (x.beta_mean) {
      EXPECT_EQ(*x.beta_mean, *y.beta_mean);
    }
  }
  EXPECT_EQ(a.realized_censoring, b.realized_censoring);
}

TEST(Benchmark, FailuresAreRecordedNotFatal) {
  SimConfig c;
  c.n = 200;
  c.reps = 2;
  c.bins = 6;  // not a power of two: the multi-resolution fit refuses
  const auto tab = run_benchmark(c, {"piecewise", "mrh"});
  EXPECT_EQ(tab.row("piecewise").reps_ok, 2u);
  const auto& m = tab.row("mrh");
  EXPECT_EQ(m.reps_ok, 0u);
  EXPECT_EQ(m.failures, 2u);
  ASSERT_EQ(m.errors.size(), 2u);
  EXPECT_EQ(m.errors[0].rfind("rep 0: ", 0), 0u);
  EXPECT_TRUE(std::isnan(m.bias[0]));
}

TEST(Benchmark, NphRowsPerGroup) {
  auto c = SimConfig::nph_defaults();
  c.n = 400;
  c.reps = 2;
  const auto tab = run_benchmark(c, {"piecewise"});
  ASSERT_EQ(tab.rows.size(), 2u);
  EXPECT_EQ(tab.rows[0].estimator, "piecewise/trt0");
  EXPECT_EQ(tab.rows[1].estimator, "piecewise/trt1");
  EXPECT_EQ(tab.truth[1][0], 0.15);
}

TEST(Benchmark, MonteCarloErrorShrinksWithReps) {
  // SE of the per-bin bias from the replicate spread; 4x reps should halve it
  // pooled over the bins, since one bin's spread from few reps is itself noisy
  auto se = [](std::size_t reps) {
    SimConfig c;
    c.n = 300;
    c.reps = reps;
    c.bins = 8;
    c.seed = 21;
    const auto tab = run_benchmark(c, {"piecewise"});
    double v = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      std::vector<double> x;
      for (const auto& cur : tab.row("piecewise").curves) x.push_back(cur.values[j]);
      v += variance(x) / static_cast<double>(x.size());
    }
    return std::sqrt(v);
  };
  const double ratio = se(20) / se(80);
  EXPECT_GT(ratio, 1.6);
  EXPECT_LT(ratio, 2.5);
}
