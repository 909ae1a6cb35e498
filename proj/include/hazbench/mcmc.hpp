#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "csv.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace hazbench {

struct MCMCControl {
  std::size_t n_iter = 10000;
  std::size_t n_burn = 1000;
  std::size_t n_thin = 1;
  std::size_t n_chains = 1;
  std::uint64_t seed = 1;
  double init_jitter = 0.0;  // sd of random perturbation of starting values (transformed scale)

  void validate() const {
    if (n_burn >= n_iter) throw InputError("MCMC needs n_burn < n_iter");
    if (n_thin < 1) throw InputError("MCMC needs n_thin >= 1");
    if (n_chains < 1) throw InputError("MCMC needs n_chains >= 1");
  }

  std::size_t kept() const { return (n_iter - n_burn) / n_thin; }
};

/// One Markov chain transition kernel with its current state.
class ChainSampler {
 public:
  virtual ~ChainSampler() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> labels() const = 0;
  /// One full sweep. Proposal scales adapt only when `adapt` is set.
  virtual void step(Rng& rng, bool adapt) = 0;
  virtual void record(std::vector<double>& row) const = 0;
  virtual std::unique_ptr<ChainSampler> clone() const = 0;
  virtual std::vector<double> proposal_scales() const { return {}; }
};

struct SamplerState {
  static constexpr int kVersion = 1;
  int version = kVersion;
  std::shared_ptr<const ChainSampler> sampler;
  std::string rng;
  std::size_t iteration = 0;
  std::size_t n_burn = 0;
  std::size_t n_thin = 1;

  bool valid() const { return version == kVersion && sampler && !rng.empty(); }
  bool frozen() const { return iteration >= n_burn; }
};

/// Kept MCMC draws, one labelled column per parameter.
struct PosteriorChains {
  std::vector<std::string> labels;
  std::vector<double> samples;  // row-major
  MCMCControl control;
  std::size_t chain_index = 0;
  std::map<std::string, double> meta;  // sampler settings needed to interpret columns
  SamplerState state;

  std::size_t cols() const { return labels.size(); }
  std::size_t rows() const { return cols() ? samples.size() / cols() : 0; }
  double at(std::size_t r, std::size_t c) const { return samples[r * cols() + c]; }

  std::optional<std::size_t> find(const std::string& label) const {
    for (std::size_t c = 0; c < labels.size(); ++c) {
      if (labels[c] == label) return c;
    }
    return std::nullopt;
  }
  std::size_t index_of(const std::string& label) const {
    if (auto c = find(label)) return *c;
    throw InputError("no chain column '" + label + "'");
  }
  std::vector<double> column(std::size_t c) const {
    std::vector<double> v(rows());
    for (std::size_t r = 0; r < v.size(); ++r) v[r] = at(r, c);
    return v;
  }
  std::vector<double> column(const std::string& label) const { return column(index_of(label)); }
};

namespace detail {

/// Iterations first+1..last. Iteration t is kept when t > burn and
/// (t - burn) is a multiple of thin; adaptation runs while t <= burn.
inline void advance_chain(ChainSampler& s, Rng& rng, std::size_t first, std::size_t last, std::size_t burn,
                          std::size_t thin, std::vector<double>& out) {
  std::vector<double> row;
  for (std::size_t t = first + 1; t <= last; ++t) {
    s.step(rng, t <= burn);
    if (t > burn && (t - burn) % thin == 0) {
      row.clear();
      s.record(row);
      out.insert(out.end(), row.begin(), row.end());
    }
  }
}

inline void save_state(PosteriorChains& pc, const ChainSampler& s, const Rng& rng, std::size_t iteration,
                       std::size_t burn, std::size_t thin) {
  pc.state.sampler = std::shared_ptr<const ChainSampler>(s.clone());
  pc.state.rng = rng.save();
  pc.state.iteration = iteration;
  pc.state.n_burn = burn;
  pc.state.n_thin = thin;
}

}  // namespace detail

/// Run one chain from a freshly initialised sampler using `rng`.
inline PosteriorChains run_chain(std::unique_ptr<ChainSampler> sampler, Rng rng, const MCMCControl& ctrl,
                                 std::size_t chain_index = 0) {
  ctrl.validate();
  PosteriorChains pc;
  pc.labels = sampler->labels();
  pc.control = ctrl;
  pc.chain_index = chain_index;
  pc.samples.reserve(ctrl.kept() * pc.labels.size());
  detail::advance_chain(*sampler, rng, 0, ctrl.n_iter, ctrl.n_burn, ctrl.n_thin, pc.samples);
  detail::save_state(pc, *sampler, rng, ctrl.n_iter, ctrl.n_burn, ctrl.n_thin);
  return pc;
}

/// `ctrl.n_chains` chains in parallel. Chain k draws from stream (seed, k) and
/// its starting state comes from make(k, rng) on that stream.
inline std::vector<PosteriorChains> run_chains(
    const std::function<std::unique_ptr<ChainSampler>(std::size_t, Rng&)>& make, const MCMCControl& ctrl) {
  ctrl.validate();
  std::vector<PosteriorChains> out(ctrl.n_chains);
  parallel_for(ctrl.n_chains, [&](std::size_t k) {
    Rng rng = Rng::stream(ctrl.seed, k);
    auto s = make(k, rng);
    out[k] = run_chain(std::move(s), rng, ctrl, k);
  });
  return out;
}

/// Extend a chain by extra.n_iter iterations from its saved state. Burn-in and
/// thinning are those of the original run; extra.n_burn and extra.n_thin are
/// ignored. Proposal scales stay frozen once the original burn-in has passed.
inline PosteriorChains continue_chain(const PosteriorChains& prev, const MCMCControl& extra) {
  const SamplerState& st = prev.state;
  if (!st.valid()) throw InputError("incompatible or missing sampler state");
  auto s = st.sampler->clone();
  if (s->labels() != prev.labels) throw InputError("sampler state does not match chain columns");
  Rng rng;
  rng.restore(st.rng);
  PosteriorChains pc = prev;
  const std::size_t last = st.iteration + extra.n_iter;
  detail::advance_chain(*s, rng, st.iteration, last, st.n_burn, st.n_thin, pc.samples);
  pc.control.n_iter = last;
  detail::save_state(pc, *s, rng, last, st.n_burn, st.n_thin);
  return pc;
}

// ---- diagnostics ----

/// Potential scale reduction factor per column:
/// sqrt(((n-1)/n W + B/n) / W) with W the mean within-chain variance and B/n
/// the variance of the chain means. Constant columns give NaN.
inline std::vector<double> gelman_rubin(const std::vector<PosteriorChains>& chains) {
  if (chains.size() < 2) throw InputError("Gelman-Rubin needs at least two chains");
  const std::size_t n = chains.front().rows(), p = chains.front().cols();
  for (const auto& c : chains) {
    if (c.rows() != n || c.cols() != p) throw InputError("Gelman-Rubin needs chains of equal shape");
    if (c.labels != chains.front().labels) throw InputError("Gelman-Rubin chains have different columns");
  }
  if (n < 2) throw InputError("Gelman-Rubin needs at least two kept draws per chain");
  const double m = static_cast<double>(chains.size()), nn = static_cast<double>(n);
  std::vector<double> out(p);
  for (std::size_t c = 0; c < p; ++c) {
    std::vector<double> means;
    double W = 0.0;
    for (const auto& ch : chains) {
      const auto col = ch.column(c);
      means.push_back(mean(col));
      W += variance(col);
    }
    W /= m;
    const double B_over_n = variance(means);
    const double V = (nn - 1.0) / nn * W + B_over_n;
    out[c] = W > 0.0 ? std::sqrt(V / W) : kNaN;
  }
  return out;
}

/// Sample autocorrelation at `lag`.
inline double autocorrelation(std::span<const double> x, std::size_t lag) {
  const std::size_t n = x.size();
  if (lag >= n) return kNaN;
  const double mu = mean(x);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) den += (x[i] - mu) * (x[i] - mu);
  for (std::size_t i = 0; i + lag < n; ++i) num += (x[i] - mu) * (x[i + lag] - mu);
  return den > 0.0 ? num / den : kNaN;
}

/// Effective sample size from Geyer's initial positive sequence.
inline double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t k = 1; k + 1 < n; k += 2) {
    const double pair = autocorrelation(x, k) + autocorrelation(x, k + 1);
    if (!(pair > 0.0)) break;
    sum += pair;
  }
  const double tau = std::max(1.0 + 2.0 * sum, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

/// Monte Carlo standard error of the mean by non-overlapping batch means.
inline double mc_standard_error(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return kNaN;
  const auto bsize = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const std::size_t nb = n / bsize;
  std::vector<double> bm(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < bsize; ++i) s += x[b * bsize + i];
    bm[b] = s / static_cast<double>(bsize);
  }
  return std::sqrt(variance(bm) / static_cast<double>(nb));
}

// ---- persistence ----

/// Writes chain_<k>.csv (labelled columns, round-trip number format) plus
/// chains_header.txt with sampler settings, control values and `extra` entries.
inline void write_chains(const std::filesystem::path& dir, const std::vector<PosteriorChains>& chains,
                         const std::string& sampler, const std::map<std::string, std::string>& extra = {}) {
  if (chains.empty()) throw InputError("no chains to write");
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < chains.size(); ++k) {
    std::ofstream os(dir / ("chain_" + std::to_string(k + 1) + ".csv"));
    if (!os) throw InputError("cannot write chain file in '" + dir.string() + "'");
    const auto& c = chains[k];
    for (std::size_t j = 0; j < c.cols(); ++j) os << (j ? "," : "") << c.labels[j];
    os << "\n";
    for (std::size_t r = 0; r < c.rows(); ++r) {
      for (std::size_t j = 0; j < c.cols(); ++j) os << (j ? "," : "") << format_double(c.at(r, j));
      os << "\n";
    }
  }
  std::ofstream hs(dir / "chains_header.txt");
  const auto& ctl = chains.front().control;
  hs << "sampler=" << sampler << "\n";
  hs << "n_chains=" << chains.size() << "\n";
  hs << "seed=" << ctl.seed << "\n";
  hs << "n_iter=" << ctl.n_iter << "\n";
  hs << "n_burn=" << ctl.n_burn << "\n";
  hs << "n_thin=" << ctl.n_thin << "\n";
  for (const auto& [k, v] : chains.front().meta) hs << k << "=" << format_double(v) << "\n";
  for (const auto& [k, v] : extra) hs << k << "=" << v << "\n";
}

struct ChainSet {
  std::map<std::string, std::string> header;
  std::vector<PosteriorChains> chains;
};

inline ChainSet read_chains(const std::filesystem::path& dir) {
  ChainSet cs;
  std::ifstream hs(dir / "chains_header.txt");
  if (!hs) throw InputError("missing chains_header.txt in '" + dir.string() + "'");
  std::string line;
  while (std::getline(hs, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    cs.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> std::string {
    auto it = cs.header.find(key);
    if (it == cs.header.end()) throw InputError("chains header lacks '" + key + "'");
    return it->second;
  };
  const auto n = static_cast<std::size_t>(parse_double(get("n_chains")));
  MCMCControl ctl;
  ctl.seed = std::stoull(get("seed"));
  ctl.n_iter = static_cast<std::size_t>(parse_double(get("n_iter")));
  ctl.n_burn = static_cast<std::size_t>(parse_double(get("n_burn")));
  ctl.n_thin = static_cast<std::size_t>(parse_double(get("n_thin")));
  ctl.n_chains = n;
  for (std::size_t k = 0; k < n; ++k) {
    const auto path = dir / ("chain_" + std::to_string(k + 1) + ".csv");
    const CsvTable t = read_csv_file(path.string());
    PosteriorChains pc;
    pc.labels = t.header;
    pc.control = ctl;
    pc.chain_index = k;
    for (const auto& r : t.rows) {
      for (const auto& v : r) pc.samples.push_back(parse_double(v));
    }
    cs.chains.push_back(std::move(pc));
  }
  return cs;
}

}  // namespace hazbench
