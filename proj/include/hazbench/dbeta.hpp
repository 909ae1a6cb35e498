#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "grid.hpp"
#include "mcmc.hpp"

namespace hazbench {

enum class DiscretizeMode { round, ceiling };

/// Survival times on periods 1..K with per-period deaths and at-risk counts.
/// n_k counts subjects alive at the start of period k; a subject censored in
/// period k survives that period.
struct DiscreteSurvData {
  std::vector<long> times;
  std::vector<int> events;
  std::size_t K = 0;
  std::vector<long> deaths;   // d_k, k = 1..K stored at k-1
  std::vector<long> at_risk;  // n_k
  bool sparse_warning = false;  // more periods than subjects

  static DiscreteSurvData from_periods(std::vector<long> times, std::vector<int> events) {
    if (times.empty()) throw InputError("discrete data: no subjects");
    if (times.size() != events.size()) throw InputError("discrete data: times and events differ in length");
    DiscreteSurvData d;
    long K = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (times[i] < 1) throw InputError("discrete data: period " + std::to_string(times[i]) + " < 1 at record " +
                                         std::to_string(i + 1));
      if (events[i] != 0 && events[i] != 1) throw InputError("discrete data: event must be 0 or 1");
      K = std::max(K, times[i]);
    }
    d.K = static_cast<std::size_t>(K);
    d.deaths.assign(d.K, 0);
    d.at_risk.assign(d.K, 0);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto t = static_cast<std::size_t>(times[i]);
      for (std::size_t k = 0; k < t; ++k) d.at_risk[k] += 1;
      if (events[i]) d.deaths[t - 1] += 1;
    }
    d.sparse_warning = d.K > times.size();
    d.times = std::move(times);
    d.events = std::move(events);
    return d;
  }
};

/// Integer periods from continuous times measured in units of `unit`.
/// Round mode fails on anything that rounds to 0.
inline DiscreteSurvData discretize(const SurvDataset& data, DiscretizeMode mode, double unit = 1.0) {
  if (!(unit > 0.0)) throw InputError("discretize: unit must be > 0");
  std::vector<long> t;
  std::vector<int> e;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double x = data[i].time / unit;
    const long k = mode == DiscretizeMode::ceiling ? static_cast<long>(std::ceil(x)) : std::lround(x);
    if (k < 1) {
      throw InputError("record " + std::to_string(i + 1) + " time " + format_double(data[i].time) +
                       " rounds to period 0; use ceiling mode");
    }
    t.push_back(k);
    e.push_back(data[i].event);
  }
  return DiscreteSurvData::from_periods(std::move(t), std::move(e));
}

struct DBetaPriors {
  std::vector<double> alpha;  // per period; empty or size 1 broadcasts
  std::vector<double> beta;
  double c = 0.0;              // latent binomial link size between periods
  bool random_c = false;       // c_k ~ Poisson(c) a priori, updated by +-1 Metropolis steps
  double default_shape = 0.001;

  double alpha_at(std::size_t k) const { return pick(alpha, k); }
  double beta_at(std::size_t k) const { return pick(beta, k); }

  void validate(std::size_t K) const {
    for (const auto* v : {&alpha, &beta}) {
      if (v->size() > 1 && v->size() != K) throw InputError("dbeta prior vectors must have length K");
      for (double x : *v) {
        if (!(x > 0.0)) throw InputError("dbeta prior shapes must be > 0");
      }
    }
    if (!(default_shape > 0.0)) throw InputError("dbeta prior shapes must be > 0");
    if (!(c >= 0.0)) throw InputError("dbeta link intensity c must be >= 0");
  }

 private:
  double pick(const std::vector<double>& v, std::size_t k) const {
    if (v.empty()) return default_shape;
    return v.size() == 1 ? v[0] : v[k];
  }
};

/// Gibbs sampler for the discrete-time Markov beta process.
///
/// Prior: pi_1 ~ Beta(a_1, b_1); u_k | pi_k ~ Bin(c_k, pi_k);
/// pi_{k+1} | u_k ~ Beta(a_{k+1} + u_k, b_{k+1} + c_k - u_k). With c = 0 the
/// periods are independent Beta(a_k, b_k). Full conditionals:
///   pi_k | . ~ Beta(a_k + d_k + u_{k-1} + u_k,
///                   b_k + n_k - d_k + (c_{k-1} - u_{k-1}) + (c_k - u_k))
///   p(u_k | .) ∝ Bin(u_k; c_k, pi_k) Beta(pi_{k+1}; a_{k+1} + u_k, b_{k+1} + c_k - u_k)
/// and u_k is drawn exactly by enumerating 0..c_k.
class DBetaSampler final : public ChainSampler {
 public:
  static constexpr double kEdge = 1e-12;

  DBetaSampler(const DiscreteSurvData& data, const DBetaPriors& priors) : priors_(priors) {
    if (data.K == 0) throw InputError("dbeta: K = 0");
    priors.validate(data.K);
    K_ = data.K;
    d_.assign(data.deaths.begin(), data.deaths.end());
    n_.assign(data.at_risk.begin(), data.at_risk.end());
    long total = 0;
    for (long d : data.deaths) total += d;
    if (total == 0) throw EstimatorError("dbeta: no events");
    a_.resize(K_);
    b_.resize(K_);
    for (std::size_t k = 0; k < K_; ++k) {
      a_[k] = priors.alpha_at(k);
      b_[k] = priors.beta_at(k);
    }
    pi_.resize(K_);
    for (std::size_t k = 0; k < K_; ++k) {
      const double crude = (static_cast<double>(d_[k]) + 0.5) / (static_cast<double>(n_[k]) + 1.0);
      pi_[k] = std::clamp(crude, 0.01, 0.99);
    }
    const auto c0 = static_cast<long>(std::llround(priors.c));
    c_.assign(K_ > 0 ? K_ - 1 : 0, c0);
    u_.resize(c_.size());
    for (std::size_t k = 0; k < u_.size(); ++k) u_[k] = c_[k] / 2;
    track_links_ = priors.c > 0.0 || priors.random_c;
  }

  void jitter(Rng& rng, double sd) {
    if (sd <= 0.0) return;
    for (auto& p : pi_) {
      const double z = std::log(p) - std::log1p(-p) + sd * rng.normal();
      p = std::clamp(1.0 / (1.0 + std::exp(-z)), kEdge, 1.0 - kEdge);
    }
  }

  std::string name() const override { return "dbeta"; }

  std::vector<std::string> labels() const override {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < K_; ++k) out.push_back("pi_" + std::to_string(k + 1));
    if (track_links_) {
      for (std::size_t k = 0; k < u_.size(); ++k) out.push_back("u_" + std::to_string(k + 1));
    }
    if (priors_.random_c) {
      for (std::size_t k = 0; k < c_.size(); ++k) out.push_back("c_" + std::to_string(k + 1));
    }
    return out;
  }

  void record(std::vector<double>& row) const override {
    row.insert(row.end(), pi_.begin(), pi_.end());
    if (track_links_) {
      for (long u : u_) row.push_back(static_cast<double>(u));
    }
    if (priors_.random_c) {
      for (long c : c_) row.push_back(static_cast<double>(c));
    }
  }

  std::unique_ptr<ChainSampler> clone() const override { return std::make_unique<DBetaSampler>(*this); }

  void step(Rng& rng, bool) override {
    for (std::size_t k = 0; k < K_; ++k) {
      double a = a_[k] + static_cast<double>(d_[k]);
      double b = b_[k] + static_cast<double>(n_[k] - d_[k]);
      if (k > 0) {
        a += static_cast<double>(u_[k - 1]);
        b += static_cast<double>(c_[k - 1] - u_[k - 1]);
      }
      if (k < c_.size()) {
        a += static_cast<double>(u_[k]);
        b += static_cast<double>(c_[k] - u_[k]);
      }
      pi_[k] = std::clamp(rng.beta(a, b), kEdge, 1.0 - kEdge);
    }
    for (std::size_t k = 0; k < u_.size(); ++k) {
      if (priors_.random_c) update_c(rng, k);
      u_[k] = draw_u(rng, k);
    }
  }

  const std::vector<double>& pi() const { return pi_; }

 private:
  double log_link(std::size_t k, long u, long c) const {
    // log Bin(u; c, pi_k) + log Beta(pi_{k+1}; a + u, b + c - u), up to terms free of (u, c)
    const double p = pi_[k], q = pi_[k + 1];
    const double A = a_[k + 1] + static_cast<double>(u), B = b_[k + 1] + static_cast<double>(c - u);
    return std::lgamma(static_cast<double>(c) + 1.0) - std::lgamma(static_cast<double>(u) + 1.0) -
           std::lgamma(static_cast<double>(c - u) + 1.0) + static_cast<double>(u) * std::log(p) +
           static_cast<double>(c - u) * std::log1p(-p) + std::lgamma(A + B) - std::lgamma(A) - std::lgamma(B) +
           (A - 1.0) * std::log(q) + (B - 1.0) * std::log1p(-q);
  }

  long draw_u(Rng& rng, std::size_t k) const {
    const long c = c_[k];
    if (c == 0) return 0;
    std::vector<double> lw(static_cast<std::size_t>(c) + 1);
    double mx = -INFINITY;
    for (long u = 0; u <= c; ++u) {
      lw[static_cast<std::size_t>(u)] = log_link(k, u, c);
      mx = std::max(mx, lw[static_cast<std::size_t>(u)]);
    }
    double total = 0.0;
    for (auto& w : lw) {
      w = std::exp(w - mx);
      total += w;
    }
    double x = rng.uniform() * total;
    for (long u = 0; u <= c; ++u) {
      x -= lw[static_cast<std::size_t>(u)];
      if (x <= 0.0) return u;
    }
    return c;
  }

  void update_c(Rng& rng, std::size_t k) {
    const long c = c_[k];
    const long prop = rng.uniform() < 0.5 ? c - 1 : c + 1;
    if (prop < u_[k]) return;
    const double lam = priors_.c;
    auto log_target = [&](long cc) {
      return static_cast<double>(cc) * std::log(lam) - std::lgamma(static_cast<double>(cc) + 1.0) +
             log_link(k, u_[k], cc);
    };
    const double r = log_target(prop) - log_target(c);
    if (std::isfinite(r) && (r >= 0.0 || std::log(rng.uniform()) < r)) c_[k] = prop;
  }

  DBetaPriors priors_;
  std::size_t K_ = 0;
  std::vector<long> d_, n_;
  std::vector<double> a_, b_;
  std::vector<double> pi_;
  std::vector<long> u_, c_;
  bool track_links_ = false;
};

inline std::vector<PosteriorChains> fit_markov_beta_chains(const DiscreteSurvData& data, const DBetaPriors& priors,
                                                           const MCMCControl& ctrl) {
  ctrl.validate();
  if (priors.random_c && !(priors.c > 0.0)) throw InputError("random c needs a positive prior mean c");
  const DBetaSampler proto(data, priors);
  auto chains = run_chains(
      [&](std::size_t, Rng& rng) {
        auto s = std::make_unique<DBetaSampler>(proto);
        s->jitter(rng, ctrl.init_jitter);
        return std::unique_ptr<ChainSampler>(std::move(s));
      },
      ctrl);
  for (auto& c : chains) {
    c.meta["K"] = static_cast<double>(data.K);
    c.meta["c"] = priors.c;
    c.meta["random_c"] = priors.random_c ? 1.0 : 0.0;
  }
  return chains;
}

inline PosteriorChains fit_markov_beta(const DiscreteSurvData& data, const DBetaPriors& priors, MCMCControl ctrl) {
  ctrl.n_chains = 1;
  return fit_markov_beta_chains(data, priors, ctrl).front();
}

/// Per-iteration survival curves S(k) = prod_{j<=k} (1 - pi_j).
struct SurvivalDraws {
  std::size_t K = 0;
  std::vector<std::vector<double>> curves;  // [row][k-1]

  /// Point estimate (mean or median) with equal-tailed bounds, as a step curve on periods 0..K.
  HazardCurve summarize(double alpha = 0.05, bool use_median = false) const {
    std::vector<double> edges(K + 1);
    for (std::size_t k = 0; k <= K; ++k) edges[k] = static_cast<double>(k);
    HazardCurve c(TimeGrid(edges), std::vector<double>(K), CurveKind::survival);
    std::vector<double> lo(K), hi(K), col(curves.size());
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t r = 0; r < curves.size(); ++r) col[r] = curves[r][k];
      std::sort(col.begin(), col.end());
      c.values[k] = use_median ? quantile_sorted(col, 0.5) : mean(col);
      lo[k] = quantile_sorted(col, alpha / 2.0);
      hi[k] = quantile_sorted(col, 1.0 - alpha / 2.0);
    }
    c.set_bounds(std::move(lo), std::move(hi));
    return c;
  }
};

inline SurvivalDraws survival_chains(const PosteriorChains& chains, std::size_t K) {
  SurvivalDraws sd;
  sd.K = K;
  std::vector<std::size_t> cols(K);
  for (std::size_t k = 0; k < K; ++k) cols[k] = chains.index_of("pi_" + std::to_string(k + 1));
  sd.curves.resize(chains.rows());
  for (std::size_t r = 0; r < chains.rows(); ++r) {
    double s = 1.0;
    auto& cur = sd.curves[r];
    cur.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      s *= 1.0 - chains.at(r, cols[k]);
      cur[k] = s;
    }
  }
  return sd;
}

/// Continuous-time hazard per period from the per-period failure probability:
/// the posterior median of -log(1 - pi_k) / unit.
inline HazardCurve dbeta_hazard(const PosteriorChains& chains, const TimeGrid& grid, double alpha = 0.05) {
  const std::size_t K = grid.bins();
  HazardCurve c(grid, std::vector<double>(K), CurveKind::hazard);
  std::vector<double> lo(K), hi(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto f = chains.find("pi_" + std::to_string(k + 1));
    if (!f) {
      c.set_missing(k);
      continue;
    }
    auto col = chains.column(*f);
    for (auto& p : col) p = -std::log1p(-p) / grid.width(k);
    std::sort(col.begin(), col.end());
    c.values[k] = quantile_sorted(col, 0.5);
    lo[k] = quantile_sorted(col, alpha / 2.0);
    hi[k] = quantile_sorted(col, 1.0 - alpha / 2.0);
  }
  c.set_bounds(std::move(lo), std::move(hi));
  return c;
}

}  // namespace hazbench
