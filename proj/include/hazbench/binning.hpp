#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "data.hpp"
#include "grid.hpp"

namespace hazbench {

/// Occurrence/exposure sufficient statistics per (bin, stratum).
struct OccExpTable {
  TimeGrid grid;
  std::size_t n_strata = 1;
  std::vector<long> events;       // [stratum * bins + bin]
  std::vector<double> exposure;   // person-time in the bin
  std::vector<long> at_risk;      // subjects with time > bin lower edge

  std::size_t bins() const { return grid.bins(); }
  long d(std::size_t bin, std::size_t stratum = 0) const { return events[stratum * bins() + bin]; }
  double R(std::size_t bin, std::size_t stratum = 0) const { return exposure[stratum * bins() + bin]; }
  long n(std::size_t bin, std::size_t stratum = 0) const { return at_risk[stratum * bins() + bin]; }
};

namespace detail {

inline void check_within_grid(const SurvDataset& data, const TimeGrid& grid) {
  if (data.empty()) throw InputError("empty dataset");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double t = data[i].time;
    if (t > grid.stop()) {
      throw InputError("record " + std::to_string(i + 1) + " time " + format_double(t) + " beyond grid end " +
                       format_double(grid.stop()));
    }
    if (t <= grid.start()) {
      throw InputError("record " + std::to_string(i + 1) + " time " + format_double(t) +
                       " not after grid start " + format_double(grid.start()));
    }
  }
}

/// Time subject i spends in bin j: overlap of (start, time] with the bin.
inline double overlap(double time, double lo, double hi) { return std::max(0.0, std::min(time, hi) - lo); }

}  // namespace detail

/// Events in (t_j, t_{j+1}] and person-time overlap per bin and stratum.
inline OccExpTable bin_occurrence_exposure(const SurvDataset& data, const TimeGrid& grid) {
  detail::check_within_grid(data, grid);
  OccExpTable tab;
  tab.grid = grid;
  tab.n_strata = data.n_strata();
  const std::size_t J = grid.bins();
  tab.events.assign(J * tab.n_strata, 0);
  tab.exposure.assign(J * tab.n_strata, 0.0);
  tab.at_risk.assign(J * tab.n_strata, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    const std::size_t base = static_cast<std::size_t>(data.stratum_of(i)) * J;
    const std::size_t last = *grid.bin_of(r.time);
    for (std::size_t j = 0; j <= last; ++j) {
      tab.exposure[base + j] += detail::overlap(r.time, grid.lower(j), grid.upper(j));
      tab.at_risk[base + j] += 1;
    }
    if (r.event) tab.events[base + last] += 1;
  }
  return tab;
}

/// Occurrence/exposure cells split by distinct covariate pattern.
///
/// Pattern p has covariate row `patterns[p]` (the selected columns) and lives in
/// stratum `pattern_stratum[p]`. Patterns are numbered in order of first
/// appearance, so the layout is deterministic for a given dataset.
struct CellTable {
  TimeGrid grid;
  std::vector<std::vector<double>> patterns;
  std::vector<int> pattern_stratum;
  std::vector<double> events;    // [pattern * bins + bin]
  std::vector<double> exposure;
  std::vector<std::size_t> subject_pattern;

  std::size_t bins() const { return grid.bins(); }
  std::size_t n_patterns() const { return patterns.size(); }
  double d(std::size_t p, std::size_t j) const { return events[p * bins() + j]; }
  double R(std::size_t p, std::size_t j) const { return exposure[p * bins() + j]; }
};

inline CellTable bin_cells(const SurvDataset& data, const TimeGrid& grid, const std::vector<std::size_t>& columns) {
  detail::check_within_grid(data, grid);
  CellTable tab;
  tab.grid = grid;
  const std::size_t J = grid.bins();
  std::map<std::pair<int, std::vector<double>>, std::size_t> index;
  tab.subject_pattern.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    std::vector<double> x;
    x.reserve(columns.size());
    for (auto c : columns) x.push_back(r.covariates.at(c));
    auto key = std::make_pair(data.stratum_of(i), x);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, tab.patterns.size()).first;
      tab.patterns.push_back(std::move(x));
      tab.pattern_stratum.push_back(data.stratum_of(i));
      tab.events.resize(tab.events.size() + J, 0.0);
      tab.exposure.resize(tab.exposure.size() + J, 0.0);
    }
    const std::size_t p = it->second;
    tab.subject_pattern.push_back(p);
    const std::size_t last = *grid.bin_of(r.time);
    for (std::size_t j = 0; j <= last; ++j) {
      tab.exposure[p * J + j] += detail::overlap(r.time, grid.lower(j), grid.upper(j));
    }
    if (r.event) tab.events[p * J + last] += 1.0;
  }
  return tab;
}

}  // namespace hazbench
