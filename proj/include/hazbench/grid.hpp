#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace hazbench {

/// Strictly increasing bin edges t_0 < t_1 < ... < t_J.
///
/// Bin j (zero-based) is the left-open, right-closed interval (t_j, t_{j+1}].
class TimeGrid {
 public:
  TimeGrid() = default;

  explicit TimeGrid(std::vector<double> edges) : edges_(std::move(edges)) {
    if (edges_.size() < 2) throw InputError("time grid needs at least two edges");
    for (std::size_t j = 0; j < edges_.size(); ++j) {
      if (!std::isfinite(edges_[j])) throw InputError("time grid edges must be finite");
      if (j > 0 && !(edges_[j] > edges_[j - 1])) throw InputError("time grid edges must be strictly increasing");
    }
    const double w0 = edges_[1] - edges_[0];
    equal_width_ = std::all_of(edges_.begin() + 1, edges_.end(), [&, j = std::size_t{0}](double) mutable {
      ++j;
      return std::abs((edges_[j] - edges_[j - 1]) - w0) <= 1e-12 * w0;
    });
  }

  static TimeGrid equal_width(double start, double stop, std::size_t bins) {
    if (bins == 0) throw InputError("time grid needs at least one bin");
    if (!(stop > start)) throw InputError("time grid stop must exceed start");
    std::vector<double> e(bins + 1);
    const double w = (stop - start) / static_cast<double>(bins);
    for (std::size_t j = 0; j <= bins; ++j) e[j] = start + w * static_cast<double>(j);
    e[bins] = stop;
    return TimeGrid(std::move(e));
  }

  const std::vector<double>& edges() const { return edges_; }
  std::size_t bins() const { return edges_.empty() ? 0 : edges_.size() - 1; }
  double start() const { return edges_.front(); }
  double stop() const { return edges_.back(); }
  double lower(std::size_t j) const { return edges_[j]; }
  double upper(std::size_t j) const { return edges_[j + 1]; }
  double width(std::size_t j) const { return edges_[j + 1] - edges_[j]; }
  double midpoint(std::size_t j) const { return 0.5 * (edges_[j] + edges_[j + 1]); }
  bool equal_width() const { return equal_width_; }

  std::vector<double> midpoints() const {
    std::vector<double> m(bins());
    for (std::size_t j = 0; j < m.size(); ++j) m[j] = midpoint(j);
    return m;
  }

  /// Bin containing t under the (t_j, t_{j+1}] convention; t == start maps to bin 0.
  std::optional<std::size_t> bin_of(double t) const {
    if (edges_.size() < 2 || t < edges_.front() || t > edges_.back()) return std::nullopt;
    auto it = std::lower_bound(edges_.begin() + 1, edges_.end(), t);
    return static_cast<std::size_t>(it - (edges_.begin() + 1));
  }

  bool operator==(const TimeGrid& o) const { return edges_ == o.edges_; }

 private:
  std::vector<double> edges_;
  bool equal_width_ = false;
};

/// Closed time interval [lo, hi].
struct TimeRange {
  double lo = 0.0;
  double hi = 0.0;
};

enum class CurveKind { hazard, cumulative_hazard, survival, log_ratio };

inline std::string to_string(CurveKind k) {
  switch (k) {
    case CurveKind::hazard: return "hazard";
    case CurveKind::cumulative_hazard: return "cumulative_hazard";
    case CurveKind::survival: return "survival";
    case CurveKind::log_ratio: return "log_ratio";
  }
  return "hazard";
}

inline CurveKind curve_kind_from_string(const std::string& s) {
  if (s == "hazard") return CurveKind::hazard;
  if (s == "cumulative_hazard") return CurveKind::cumulative_hazard;
  if (s == "survival") return CurveKind::survival;
  if (s == "log_ratio") return CurveKind::log_ratio;
  throw InputError("unknown curve kind '" + s + "'");
}

/// Values on a time grid with optional pointwise bounds.
///
/// For kind hazard and log_ratio, value j is the (constant or midpoint) value
/// on bin j. For the step functions cumulative_hazard and survival, value j is
/// the function value at the right edge t_{j+1}, after any jump there.
struct HazardCurve {
  TimeGrid grid;
  std::vector<double> values;
  std::vector<double> lower;  // empty when no bounds
  std::vector<double> upper;
  std::vector<std::uint8_t> missing;  // empty, or 1 where the value is undefined
  CurveKind kind = CurveKind::hazard;
  std::vector<std::string> notes;

  HazardCurve() = default;
  HazardCurve(TimeGrid g, std::vector<double> v, CurveKind k = CurveKind::hazard)
      : grid(std::move(g)), values(std::move(v)), kind(k) {
    if (values.size() != grid.bins()) throw InputError("curve values do not match grid bins");
  }

  std::size_t size() const { return values.size(); }
  bool has_bounds() const { return !lower.empty(); }
  bool is_missing(std::size_t j) const { return !missing.empty() && missing[j] != 0; }

  void set_missing(std::size_t j) {
    if (missing.empty()) missing.assign(values.size(), 0);
    missing[j] = 1;
  }

  void set_bounds(std::vector<double> lo, std::vector<double> hi) {
    if (lo.size() != values.size() || hi.size() != values.size()) {
      throw InputError("bounds do not match curve length");
    }
    lower = std::move(lo);
    upper = std::move(hi);
  }

  /// Step-function evaluation for cumulative/survival curves: value in force at t.
  double step_at(double t, double initial) const {
    const auto& e = grid.edges();
    auto it = std::upper_bound(e.begin() + 1, e.end(), t);
    const auto k = static_cast<std::size_t>(it - (e.begin() + 1));
    return k == 0 ? initial : values[k - 1];
  }
};

}  // namespace hazbench
