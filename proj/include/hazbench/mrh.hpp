#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "formula.hpp"
#include "grid.hpp"
#include "mcmc.hpp"

namespace hazbench {

struct MRHPriors {
  double split_a = 1.0;   // Beta(a, a) on every split
  double H_shape = 0.01;  // Gamma(shape, rate) on each stratum's total mass
  double H_rate = 0.01;
  double beta_var = 25.0;

  void validate() const {
    if (!(split_a > 0.0 && H_shape > 0.0 && H_rate > 0.0 && beta_var > 0.0)) {
      throw InputError("MRH hyperparameters must be > 0");
    }
  }
};

struct MRHOptions {
  std::size_t M = 5;                // 2^M bins
  std::optional<double> horizon;    // defaults to the largest observed time
  bool prior_only = false;          // likelihood fixed at 1
};

/// Metropolis-within-Gibbs sampler for the multiresolution piecewise hazard.
///
/// Per stratum l the cumulative mass H_l over (0, horizon] is split
/// dyadically: heap node n sends fraction R_n of its mass to child 2n and
/// 1 - R_n to 2n+1; leaves 2^M..2^(M+1)-1 are the bin increments. A subject
/// in stratum l contributes [lambda_j e^{x'b}]^delta exp(-e^{x'b} sum_j lambda_j o_j)
/// with lambda_j = increment_j / width and o_j its time in bin j.
///
/// H_l has a conjugate Gamma full conditional and is drawn exactly; splits and
/// beta use adaptive random-walk Metropolis. Covariates are centred internally
/// so H and beta decouple; recorded H is the baseline (x = 0) mass.
class MRHSampler final : public ChainSampler {
 public:
  MRHSampler(const SurvDataset& data, const std::vector<std::size_t>& ph_cols, std::vector<std::string> beta_names,
             const MRHPriors& priors, const MRHOptions& opts)
      : priors_(priors), prior_only_(opts.prior_only), beta_names_(std::move(beta_names)) {
    priors.validate();
    if (opts.M > 12) throw InputError("MRH resolution M must be <= 12");
    M_ = opts.M;
    J_ = std::size_t{1} << M_;
    L_ = std::max<std::size_t>(data.n_strata(), 1);
    p_ = ph_cols.size();
    horizon_ = opts.horizon.value_or(data.max_time());
    if (data.max_time() > horizon_) throw InputError("MRH: observed time beyond horizon");
    width_ = horizon_ / static_cast<double>(J_);
    const TimeGrid grid = TimeGrid::equal_width(0.0, horizon_, J_);

    D_.assign(L_ * J_, 0.0);
    sum_dx_.assign(p_, 0.0);
    xbar_.assign(p_, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (std::size_t k = 0; k < p_; ++k) xbar_[k] += data[i].covariates[ph_cols[k]] / static_cast<double>(data.size());
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& r = data[i];
      Subject s;
      s.stratum = static_cast<std::size_t>(data.stratum_of(i));
      s.last = *grid.bin_of(r.time);
      s.partial = r.time - grid.lower(s.last);
      for (std::size_t k = 0; k < p_; ++k) s.x.push_back(r.covariates[ph_cols[k]] - xbar_[k]);
      if (r.event) {
        D_[s.stratum * J_ + s.last] += 1.0;
        for (std::size_t k = 0; k < p_; ++k) sum_dx_[k] += s.x[k];
      }
      subjects_.push_back(std::move(s));
    }
    if (!prior_only_) {
      for (std::size_t l = 0; l < L_; ++l) {
        double d = 0.0;
        for (std::size_t j = 0; j < J_; ++j) d += D_[l * J_ + j];
        if (d == 0.0) {
          const std::string lab = l < data.stratum_labels().size() ? data.stratum_labels()[l] : std::to_string(l + 1);
          throw EstimatorError("MRH: stratum '" + lab + "' has no events");
        }
      }
    }

    H_.assign(L_, 1.0);
    R_.assign(L_ * J_, 0.5);  // heap index 1..J-1 used
    beta_.assign(p_, 0.0);
    E_ = exposure_for(beta_);
    for (std::size_t l = 0; l < L_; ++l) {
      double d = 0.0, e = 0.0;
      for (std::size_t j = 0; j < J_; ++j) {
        d += D_[l * J_ + j];
        e += E_[l * J_ + j];
      }
      H_[l] = (d > 0.0 && e > 0.0) ? d / e * horizon_ : 1.0;
    }
    const std::size_t n_par = L_ * J_ + p_;  // H + (J-1) splits per stratum, then beta
    log_scale_.assign(n_par, std::log(0.5));
    accepted_.assign(n_par, 0);
    tried_.assign(n_par, 0);
  }

  /// Perturb the starting point on the transformed scale.
  void jitter(Rng& rng, double sd) {
    if (sd <= 0.0) return;
    for (auto& h : H_) h *= std::exp(sd * rng.normal());
    for (std::size_t l = 0; l < L_; ++l) {
      for (std::size_t n = 1; n < J_; ++n) {
        double& r = R_[l * J_ + n];
        r = inv_logit(logit(r) + sd * rng.normal());
      }
    }
    for (auto& b : beta_) b += sd * rng.normal();
    E_ = exposure_for(beta_);
  }

  std::string name() const override { return "mrh"; }

  std::vector<std::string> labels() const override {
    std::vector<std::string> out;
    for (std::size_t l = 0; l < L_; ++l) {
      const std::string s = "_s" + std::to_string(l + 1);
      out.push_back("H" + s);
      for (std::size_t n = 1; n < J_; ++n) out.push_back("R" + s + "_n" + std::to_string(n));
    }
    for (const auto& b : beta_names_) out.push_back(b);
    return out;
  }

  void record(std::vector<double>& row) const override {
    const double shift = std::exp(-centre_shift(beta_));
    for (std::size_t l = 0; l < L_; ++l) {
      row.push_back(H_[l] * shift);
      for (std::size_t n = 1; n < J_; ++n) row.push_back(R_[l * J_ + n]);
    }
    row.insert(row.end(), beta_.begin(), beta_.end());
  }

  std::unique_ptr<ChainSampler> clone() const override { return std::make_unique<MRHSampler>(*this); }

  std::vector<double> proposal_scales() const override {
    std::vector<double> s;
    for (double v : log_scale_) s.push_back(std::exp(v));
    return s;
  }

  void step(Rng& rng, bool adapt) override {
    ++sweeps_;
    for (std::size_t l = 0; l < L_; ++l) {
      // total mass: Gamma(a + d_l, b + sum_j f_j E_j / width) with f_j the leaf fractions
      {
        double d = 0.0, rate = priors_.H_rate;
        if (!prior_only_) {
          const auto f = increments(l, 1.0, nullptr, 0.0);
          for (std::size_t j = 0; j < J_; ++j) {
            d += D_[l * J_ + j];
            rate += f[j] * E_[l * J_ + j] / width_;
          }
        }
        H_[l] = std::max(rng.gamma(priors_.H_shape + d, rate), std::numeric_limits<double>::min());
      }
      for (std::size_t n = 1; n < J_; ++n) {
        const std::size_t k = l * J_ + n;
        const double r_old = R_[k];
        const double r_new = inv_logit(logit(r_old) + std::exp(log_scale_[k]) * rng.normal());
        if (!(r_new > 0.0 && r_new < 1.0)) {
          accept(rng, -INFINITY, k, adapt);
          continue;
        }
        const double ll_old = stratum_loglik(l, H_[l], nullptr, 0.0);
        const double ll_new = stratum_loglik(l, H_[l], &n, r_new);
        const double lp_old = ll_old + log_prior_R(r_old) + std::log(r_old) + std::log1p(-r_old);
        const double lp_new = ll_new + log_prior_R(r_new) + std::log(r_new) + std::log1p(-r_new);
        if (accept(rng, lp_new - lp_old, k, adapt)) R_[k] = r_new;
      }
    }
    for (std::size_t b = 0; b < p_; ++b) {
      const std::size_t k = L_ * J_ + b;
      std::vector<double> beta_new = beta_;
      beta_new[b] += std::exp(log_scale_[k]) * rng.normal();
      double diff = 0.5 * (beta_[b] * beta_[b] - beta_new[b] * beta_new[b]) / priors_.beta_var;
      std::vector<double> E_new;
      if (!prior_only_) {
        E_new = exposure_for(beta_new);
        diff += (beta_new[b] - beta_[b]) * sum_dx_[b];
        for (std::size_t l = 0; l < L_; ++l) {
          const auto inc = increments(l, H_[l], nullptr, 0.0);
          for (std::size_t j = 0; j < J_; ++j) {
            diff -= inc[j] / width_ * (E_new[l * J_ + j] - E_[l * J_ + j]);
          }
        }
      }
      if (accept(rng, diff, k, adapt)) {
        beta_ = std::move(beta_new);
        if (!prior_only_) E_ = std::move(E_new);
      }
    }
  }

  /// Bin increments for stratum l; with `node`, R at that node is replaced by r.
  std::vector<double> increments(std::size_t l, double H, const std::size_t* node, double r) const {
    std::vector<double> mass(2 * J_);
    mass[1] = H;
    for (std::size_t n = 1; n < J_; ++n) {
      const double rn = (node && *node == n) ? r : R_[l * J_ + n];
      mass[2 * n] = mass[n] * rn;
      mass[2 * n + 1] = mass[n] * (1.0 - rn);
    }
    return std::vector<double>(mass.begin() + static_cast<std::ptrdiff_t>(J_), mass.end());
  }

  /// Log posterior on the sampling scale (log H with centred covariates, logit R, beta) including the
  /// Jacobian terms; Metropolis ratios are differences of this quantity.
  double log_posterior() const {
    double lp = 0.0;
    if (!prior_only_) {
      for (std::size_t b = 0; b < p_; ++b) lp += beta_[b] * sum_dx_[b];
    }
    for (std::size_t l = 0; l < L_; ++l) {
      lp += stratum_loglik(l, H_[l], nullptr, 0.0) + log_prior_H(H_[l]) + std::log(H_[l]);
      for (std::size_t n = 1; n < J_; ++n) {
        const double r = R_[l * J_ + n];
        lp += log_prior_R(r) + std::log(r) + std::log1p(-r);
      }
    }
    for (double b : beta_) lp -= 0.5 * b * b / priors_.beta_var;
    return lp;
  }

  /// Parameters in record() order.
  std::vector<double> parameters() const {
    std::vector<double> row;
    record(row);
    return row;
  }

  void set_parameters(const std::vector<double>& row) {
    if (row.size() != L_ * J_ + p_) throw InputError("MRH parameter vector has wrong length");
    std::size_t i = 0;
    for (std::size_t l = 0; l < L_; ++l) {
      H_[l] = row[i++];
      for (std::size_t n = 1; n < J_; ++n) R_[l * J_ + n] = row[i++];
    }
    for (std::size_t b = 0; b < p_; ++b) beta_[b] = row[i++];
    const double shift = std::exp(centre_shift(beta_));
    for (auto& h : H_) h *= shift;
    E_ = exposure_for(beta_);
  }

  std::size_t resolution() const { return M_; }
  std::size_t n_strata() const { return L_; }
  double horizon() const { return horizon_; }

 private:
  struct Subject {
    std::size_t stratum = 0;
    std::size_t last = 0;
    double partial = 0.0;
    std::vector<double> x;
  };

  static double logit(double r) { return std::log(r) - std::log1p(-r); }
  static double inv_logit(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

  double centre_shift(const std::vector<double>& beta) const {
    double s = 0.0;
    for (std::size_t k = 0; k < p_; ++k) s += xbar_[k] * beta[k];
    return s;
  }

  double log_prior_H(double h) const { return (priors_.H_shape - 1.0) * std::log(h) - priors_.H_rate * h; }
  double log_prior_R(double r) const { return (priors_.split_a - 1.0) * (std::log(r) + std::log1p(-r)); }

  /// Person-time per (stratum, bin) weighted by exp(x'beta).
  std::vector<double> exposure_for(const std::vector<double>& beta) const {
    std::vector<double> full(L_ * J_, 0.0), part(L_ * J_, 0.0), E(L_ * J_, 0.0);
    for (const auto& s : subjects_) {
      double lp = 0.0;
      for (std::size_t k = 0; k < p_; ++k) lp += beta[k] * s.x[k];
      const double w = std::exp(lp);
      full[s.stratum * J_ + s.last] += w;
      part[s.stratum * J_ + s.last] += w * s.partial;
    }
    for (std::size_t l = 0; l < L_; ++l) {
      double beyond = 0.0;  // weight of subjects leaving after bin j
      for (std::size_t jj = J_; jj-- > 0;) {
        E[l * J_ + jj] = beyond * width_ + part[l * J_ + jj];
        beyond += full[l * J_ + jj];
      }
    }
    return E;
  }

  double stratum_loglik(std::size_t l, double H, const std::size_t* node, double r) const {
    if (prior_only_) return 0.0;
    const auto inc = increments(l, H, node, r);
    double ll = 0.0;
    for (std::size_t j = 0; j < J_; ++j) {
      const double lam = inc[j] / width_;
      const double d = D_[l * J_ + j];
      if (d > 0.0) ll += d * std::log(lam);
      ll -= lam * E_[l * J_ + j];
    }
    return ll;
  }

  bool accept(Rng& rng, double log_ratio, std::size_t k, bool adapt) {
    // proposals with a non-finite posterior are rejected
    const bool ok = !std::isnan(log_ratio) && log_ratio != -INFINITY &&
                    (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio);
    ++tried_[k];
    if (ok) ++accepted_[k];
    if (adapt) {
      const double gain = std::min(0.5, 1.0 / std::sqrt(static_cast<double>(sweeps_)));
      log_scale_[k] += gain * ((ok ? 1.0 : 0.0) - 0.44);
    }
    return ok;
  }

  MRHPriors priors_;
  bool prior_only_ = false;
  std::vector<std::string> beta_names_;
  std::size_t M_ = 0, J_ = 1, L_ = 1, p_ = 0;
  double horizon_ = 1.0, width_ = 1.0;
  std::vector<Subject> subjects_;
  std::vector<double> D_, E_, sum_dx_, xbar_;
  std::vector<double> H_, R_, beta_;
  std::vector<double> log_scale_;
  std::vector<long> accepted_, tried_;
  long sweeps_ = 0;
};

namespace detail {

inline std::vector<std::size_t> mrh_columns(const SurvDataset& data, const ModelFormula& formula) {
  std::vector<std::size_t> cols;
  for (const auto& t : formula.ph_terms) cols.push_back(data.covariate_index(t));
  return cols;
}

inline void mrh_meta(PosteriorChains& pc, const MRHSampler& s, const MRHPriors& pr) {
  pc.meta["M"] = static_cast<double>(s.resolution());
  pc.meta["horizon"] = s.horizon();
  pc.meta["n_strata"] = static_cast<double>(s.n_strata());
  pc.meta["split_a"] = pr.split_a;
  pc.meta["H_shape"] = pr.H_shape;
  pc.meta["H_rate"] = pr.H_rate;
  pc.meta["beta_var"] = pr.beta_var;
}

}  // namespace detail

/// Multiple chains of the MRH model; chain k uses random stream (seed, k).
inline std::vector<PosteriorChains> fit_mrh_chains(const SurvDataset& data, const ModelFormula& formula,
                                                   const MRHPriors& priors, const MCMCControl& ctrl,
                                                   const MRHOptions& opts = {}) {
  ctrl.validate();
  // nph() terms define the strata; otherwise the dataset's own strata apply
  const SurvDataset sd = formula.nph_terms.empty() ? data : with_strata(data, formula.nph_terms);
  const auto cols = detail::mrh_columns(sd, formula);
  const MRHSampler proto(sd, cols, formula.ph_terms, priors, opts);
  auto chains = run_chains(
      [&](std::size_t, Rng& rng) {
        auto s = std::make_unique<MRHSampler>(proto);
        s->jitter(rng, ctrl.init_jitter);
        return std::unique_ptr<ChainSampler>(std::move(s));
      },
      ctrl);
  for (auto& c : chains) detail::mrh_meta(c, proto, priors);
  return chains;
}

/// Single chain (the first chain of fit_mrh_chains).
inline PosteriorChains fit_mrh(const SurvDataset& data, const ModelFormula& formula, std::size_t M,
                               const MRHPriors& priors, MCMCControl ctrl, MRHOptions opts = {}) {
  opts.M = M;
  ctrl.n_chains = 1;
  return fit_mrh_chains(data, formula, priors, ctrl, opts).front();
}

struct MRHSummary {
  std::vector<HazardCurve> hazards;     // per stratum, posterior median with quantile bounds
  std::vector<HazardCurve> log_ratios;  // stratum l (l >= 2) against stratum 1
  std::vector<std::string> beta_names;
  std::vector<double> beta_median, beta_lower, beta_upper;
};

/// Per-iteration bin hazards, [stratum][row][bin].
inline std::vector<std::vector<std::vector<double>>> mrh_hazard_draws(const PosteriorChains& chains) {
  const auto M = static_cast<std::size_t>(chains.meta.at("M"));
  const auto L = static_cast<std::size_t>(chains.meta.at("n_strata"));
  const double horizon = chains.meta.at("horizon");
  const std::size_t J = std::size_t{1} << M;
  const double width = horizon / static_cast<double>(J);
  std::vector<std::vector<std::vector<double>>> out(L, std::vector<std::vector<double>>(chains.rows()));
  std::vector<double> mass(2 * J);
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t base = chains.index_of("H_s" + std::to_string(l + 1));
    for (std::size_t r = 0; r < chains.rows(); ++r) {
      mass[1] = chains.at(r, base);
      for (std::size_t n = 1; n < J; ++n) {
        const double rn = chains.at(r, base + n);
        mass[2 * n] = mass[n] * rn;
        mass[2 * n + 1] = mass[n] * (1.0 - rn);
      }
      auto& h = out[l][r];
      h.resize(J);
      for (std::size_t j = 0; j < J; ++j) h[j] = mass[J + j] / width;
    }
  }
  return out;
}

/// Posterior medians and equal-tailed (alpha/2, 1 - alpha/2) bounds. Log
/// hazard ratios are formed per iteration before taking quantiles.
inline MRHSummary summarize_chains(const PosteriorChains& chains, double alpha, const TimeGrid& grid) {
  if (chains.rows() == 0) throw InputError("summarize_chains: empty chains");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  const auto M = static_cast<std::size_t>(chains.meta.at("M"));
  const std::size_t J = std::size_t{1} << M;
  const double horizon = chains.meta.at("horizon");
  if (grid.bins() != J || !grid.equal_width() || std::abs(grid.stop() - horizon) > 1e-9 * horizon ||
      grid.start() != 0.0) {
    throw InputError("summarize_chains: grid does not match the sampler's " + std::to_string(J) + " bins");
  }
  const auto draws = mrh_hazard_draws(chains);
  MRHSummary s;
  auto summarize = [&](const std::vector<std::vector<double>>& rows, CurveKind kind) {
    HazardCurve c(grid, std::vector<double>(J), kind);
    std::vector<double> lo(J), hi(J), col(rows.size());
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t r = 0; r < rows.size(); ++r) col[r] = rows[r][j];
      std::sort(col.begin(), col.end());
      c.values[j] = quantile_sorted(col, 0.5);
      lo[j] = quantile_sorted(col, alpha / 2.0);
      hi[j] = quantile_sorted(col, 1.0 - alpha / 2.0);
    }
    c.set_bounds(std::move(lo), std::move(hi));
    return c;
  };
  for (const auto& d : draws) s.hazards.push_back(summarize(d, CurveKind::hazard));
  for (std::size_t l = 1; l < draws.size(); ++l) {
    std::vector<std::vector<double>> lr(chains.rows(), std::vector<double>(J));
    for (std::size_t r = 0; r < chains.rows(); ++r) {
      for (std::size_t j = 0; j < J; ++j) lr[r][j] = std::log(draws[l][r][j] / draws[0][r][j]);
    }
    s.log_ratios.push_back(summarize(lr, CurveKind::log_ratio));
  }
  const std::size_t first_beta = draws.size() * J;
  for (std::size_t c = first_beta; c < chains.cols(); ++c) {
    auto col = chains.column(c);
    std::sort(col.begin(), col.end());
    s.beta_names.push_back(chains.labels[c]);
    s.beta_median.push_back(quantile_sorted(col, 0.5));
    s.beta_lower.push_back(quantile_sorted(col, alpha / 2.0));
    s.beta_upper.push_back(quantile_sorted(col, 1.0 - alpha / 2.0));
  }
  return s;
}

}  // namespace hazbench
