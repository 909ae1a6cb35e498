#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include <boost/random/beta_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "common.hpp"

namespace hazbench {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of stream `index` under a master seed. Streams depend only on
/// (seed, index), never on scheduling, so parallel and serial runs agree.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix_seed(seed ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

/// Random source for every sampler and generator in the library.
///
/// The engine is std::mt19937_64 (sequence fixed by the standard) and the
/// variate algorithms come from Boost.Random, which are identical across
/// standard libraries. Distributions are constructed per draw, so the full
/// generator state is the engine state and can be saved and restored exactly.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(derive_seed(seed, index));
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    for (;;) {
      const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() { return boost::random::normal_distribution<double>(0.0, 1.0)(engine_); }

  /// Gamma with shape/rate parameterisation.
  double gamma(double shape, double rate) {
    return boost::random::gamma_distribution<double>(shape, 1.0)(engine_) / rate;
  }

  double beta(double a, double b) { return boost::random::beta_distribution<double>(a, b)(engine_); }

  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    return boost::random::poisson_distribution<long, double>(mean)(engine_);
  }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    const auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  std::string save() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw InputError("invalid random generator state");
  }

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
};

}  // namespace hazbench
