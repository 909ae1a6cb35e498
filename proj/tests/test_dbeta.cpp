#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "hazbench/hazbench.hpp"

using namespace hazbench;

namespace {

MCMCControl ctrl(std::size_t iter, std::size_t burn, std::uint64_t seed = 1) {
  MCMCControl c;
  c.n_iter = iter;
  c.n_burn = burn;
  c.seed = seed;
  return c;
}

// Geometric-ish discrete lifetimes over `K` periods with random censoring.
DiscreteSurvData discrete_sample(std::uint64_t seed, std::size_t n, double p, long K) {
  Rng rng(seed);
  std::vector<long> t;
  std::vector<int> e;
  for (std::size_t i = 0; i < n; ++i) {
    long k = 1;
    while (k < K && rng.uniform() >= p) ++k;
    const bool cens = rng.uniform() < 0.2;
    t.push_back(k);
    e.push_back(cens ? 0 : 1);
  }
  return DiscreteSurvData::from_periods(t, e);
}

double lag1(const std::vector<double>& v) {
  const double m = mean(v);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) den += (v[i] - m) * (v[i] - m);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) num += (v[i] - m) * (v[i + 1] - m);
  return num / den;
}

}  // namespace

TEST(Discretize, CeilingAndRound) {
  const auto d = SurvDataset::from_arrays({0.4, 1.6}, {1, 0});
  const auto c = discretize(d, DiscretizeMode::ceiling);
  EXPECT_EQ(c.times, (std::vector<long>{1, 2}));
  EXPECT_EQ(c.K, 2u);
  EXPECT_EQ(c.deaths, (std::vector<long>{1, 0}));
  EXPECT_EQ(c.at_risk, (std::vector<long>{2, 1}));
  EXPECT_THROW(discretize(d, DiscretizeMode::round), InputError);
  try {
    discretize(d, DiscretizeMode::round);
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("ceiling"), std::string::npos);
  }
  const auto r = discretize(SurvDataset::from_arrays({0.6, 1.4, 2.5}, {1, 1, 1}), DiscretizeMode::round);
  EXPECT_EQ(r.times, (std::vector<long>{1, 1, 3}));
  // unit rescaling: days to 30-day months
  const auto m = discretize(SurvDataset::from_arrays({29.0, 31.0}, {1, 1}), DiscretizeMode::ceiling, 30.0);
  EXPECT_EQ(m.times, (std::vector<long>{1, 2}));
}

TEST(Discretize, SparseWarning) {
  std::vector<long> t(10, 1);
  t[0] = 200;
  const auto d = DiscreteSurvData::from_periods(t, std::vector<int>(10, 1));
  EXPECT_EQ(d.K, 200u);
  EXPECT_TRUE(d.sparse_warning);
  EXPECT_FALSE(discrete_sample(1, 50, 0.3, 10).sparse_warning);
  EXPECT_THROW(DiscreteSurvData::from_periods({0, 1}, {1, 1}), InputError);
  EXPECT_THROW(DiscreteSurvData::from_periods({}, {}), InputError);
}

TEST(DBeta, IndependentSinglePeriodConjugate) {
  // 12 deaths of 40 at risk in one period
  std::vector<long> t(40, 1);
  std::vector<int> e(40, 0);
  for (int i = 0; i < 12; ++i) e[i] = 1;
  const auto d = DiscreteSurvData::from_periods(t, e);
  DBetaPriors pr;
  pr.alpha = {2.0};
  pr.beta = {3.0};
  const auto ch = fit_markov_beta(d, pr, ctrl(20000, 100, 4));
  ASSERT_EQ(ch.labels, std::vector<std::string>{"pi_1"});
  const auto x = ch.column("pi_1");
  const double a = 2.0 + 12.0, b = 3.0 + 28.0;
  EXPECT_NEAR(mean(x), a / (a + b), 2.0 * mc_standard_error(x));
  EXPECT_NEAR(variance(x), a * b / ((a + b) * (a + b) * (a + b + 1.0)), 2e-4);
}

TEST(DBeta, IndependentAllPeriodsConjugate) {
  const auto d = discrete_sample(2, 300, 0.25, 8);
  DBetaPriors pr;
  pr.alpha = {0.5};
  pr.beta = {0.5};
  const auto ch = fit_markov_beta(d, pr, ctrl(10000, 100, 6));
  for (std::size_t k = 0; k < d.K; ++k) {
    const auto x = ch.column("pi_" + std::to_string(k + 1));
    const double a = 0.5 + static_cast<double>(d.deaths[k]);
    const double b = 0.5 + static_cast<double>(d.at_risk[k] - d.deaths[k]);
    EXPECT_NEAR(mean(x), a / (a + b), 2.0 * mc_standard_error(x)) << k;
  }
}

TEST(DBeta, LinkIntensityRaisesSmoothness) {
  const auto d = discrete_sample(3, 150, 0.15, 20);
  auto post_means = [&](double c) {
    DBetaPriors pr;
    pr.alpha = {1.0};
    pr.beta = {1.0};
    pr.c = c;
    const auto ch = fit_markov_beta(d, pr, ctrl(4000, 500, 8));
    std::vector<double> m;
    for (std::size_t k = 0; k < d.K; ++k) m.push_back(mean(ch.column("pi_" + std::to_string(k + 1))));
    return m;
  };
  const auto indep = post_means(0.0);
  const auto linked = post_means(200.0);
  EXPECT_GT(lag1(linked), lag1(indep));
  // and the adjacent differences shrink
  double dv0 = 0.0, dv1 = 0.0;
  for (std::size_t k = 1; k < d.K; ++k) {
    dv0 += std::abs(indep[k] - indep[k - 1]);
    dv1 += std::abs(linked[k] - linked[k - 1]);
  }
  EXPECT_LT(dv1, dv0);
}

TEST(DBeta, LinkColumnsAndRandomC) {
  const auto d = discrete_sample(4, 80, 0.3, 5);
  DBetaPriors pr;
  pr.c = 5.0;
  auto ch = fit_markov_beta(d, pr, ctrl(300, 100));
  EXPECT_TRUE(ch.find("u_1").has_value());
  EXPECT_TRUE(ch.find("u_4").has_value());
  EXPECT_FALSE(ch.find("u_5").has_value());
  EXPECT_FALSE(ch.find("c_1").has_value());
  for (std::size_t r = 0; r < ch.rows(); ++r) {
    const double u = ch.at(r, ch.index_of("u_2"));
    EXPECT_GE(u, 0.0);
    EXPECT_LE(u, 5.0);
    EXPECT_EQ(u, std::round(u));
  }
  pr.random_c = true;
  ch = fit_markov_beta(d, pr, ctrl(300, 100));
  EXPECT_TRUE(ch.find("c_1").has_value());
  for (std::size_t r = 0; r < ch.rows(); ++r) {
    EXPECT_LE(ch.at(r, ch.index_of("u_1")), ch.at(r, ch.index_of("c_1")));
  }
  pr.c = 0.0;
  EXPECT_THROW(fit_markov_beta(d, pr, ctrl(300, 100)), InputError);
}

TEST(DBeta, DrawsStayInsideUnitInterval) {
  // tiny default shapes and extreme periods (all die, none die)
  const auto d = DiscreteSurvData::from_periods({1, 1, 2, 3, 3, 3}, {0, 0, 1, 0, 0, 0});
  for (double c : {0.0, 3.0}) {
    DBetaPriors pr;
    pr.c = c;
    const auto ch = fit_markov_beta(d, pr, ctrl(2000, 100, 3));
    for (std::size_t r = 0; r < ch.rows(); ++r) {
      for (std::size_t k = 0; k < 3; ++k) {
        const double p = ch.at(r, k);
        EXPECT_GT(p, 0.0);
        EXPECT_LT(p, 1.0);
      }
    }
    const auto sd = survival_chains(ch, 3);
    for (const auto& cur : sd.curves) {
      for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_GE(cur[k], 0.0);
        EXPECT_LE(cur[k], 1.0);
        if (k) {
          EXPECT_LE(cur[k], cur[k - 1]);
        }
      }
    }
  }
}

TEST(DBeta, PermutationInvariance) {
  const auto d = discrete_sample(5, 100, 0.3, 6);
  auto t = d.times;
  auto e = d.events;
  std::vector<std::size_t> idx(t.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::reverse(idx.begin(), idx.end());
  std::rotate(idx.begin(), idx.begin() + 37, idx.end());
  std::vector<long> t2;
  std::vector<int> e2;
  for (auto i : idx) {
    t2.push_back(t[i]);
    e2.push_back(e[i]);
  }
  const auto p = DiscreteSurvData::from_periods(t2, e2);
  EXPECT_EQ(p.deaths, d.deaths);
  EXPECT_EQ(p.at_risk, d.at_risk);
  DBetaPriors pr;
  pr.c = 4.0;
  const auto a = fit_markov_beta(d, pr, ctrl(500, 100, 12));
  const auto b = fit_markov_beta(p, pr, ctrl(500, 100, 12));
  EXPECT_EQ(a.samples, b.samples);
}

TEST(SurvivalChains, DirectProducts) {
  PosteriorChains pc;
  pc.labels = {"pi_1", "pi_2"};
  pc.samples = {0.0, 0.0, 1.0, 0.3, 0.5, 0.5};
  const auto sd = survival_chains(pc, 2);
  ASSERT_EQ(sd.curves.size(), 3u);
  EXPECT_EQ(sd.curves[0], (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(sd.curves[1], (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(sd.curves[2], (std::vector<double>{0.5, 0.25}));
  const auto s = sd.summarize(0.05, true);
  EXPECT_EQ(s.kind, CurveKind::survival);
  EXPECT_EQ(s.values[0], 0.5);
  EXPECT_LE(s.lower[1], s.values[1]);
  EXPECT_NEAR(sd.summarize().values[1], (1.0 + 0.0 + 0.25) / 3.0, 1e-15);
  EXPECT_THROW(survival_chains(pc, 3), InputError);
}

TEST(DBeta, HazardConversion) {
  PosteriorChains pc;
  pc.labels = {"pi_1", "pi_2"};
  for (int r = 0; r < 10; ++r) pc.samples.insert(pc.samples.end(), {0.5, 0.1});
  const auto h = dbeta_hazard(pc, TimeGrid({0.0, 2.0, 4.0, 6.0}));
  EXPECT_NEAR(h.values[0], std::log(2.0) / 2.0, 1e-15);
  EXPECT_NEAR(h.values[1], -std::log(0.9) / 2.0, 1e-15);
  EXPECT_TRUE(h.is_missing(2));
}

TEST(DBeta, Errors) {
  const auto d = discrete_sample(6, 30, 0.3, 4);
  DBetaPriors pr;
  pr.alpha = {1.0, 1.0};
  EXPECT_THROW(fit_markov_beta(d, pr, ctrl(100, 10)), InputError);
  pr.alpha = {-1.0};
  EXPECT_THROW(fit_markov_beta(d, pr, ctrl(100, 10)), InputError);
  pr = {};
  pr.c = -1.0;
  EXPECT_THROW(fit_markov_beta(d, pr, ctrl(100, 10)), InputError);
  const auto none = DiscreteSurvData::from_periods({1, 2}, {0, 0});
  EXPECT_THROW(fit_markov_beta(none, {}, ctrl(100, 10)), EstimatorError);
}
