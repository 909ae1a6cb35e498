#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace hazbench {

/// One right-censored observation.
struct SurvRecord {
  double time = 0.0;
  int event = 0;  // 1 = observed failure, 0 = right-censored
  std::vector<double> covariates;
};

/// Immutable right-censored dataset with optional NPH strata.
///
/// Strata are stored zero-based (0..L-1); reports print them one-based.
/// Stratum 0 is the baseline group.
class SurvDataset {
 public:
  SurvDataset() = default;

  explicit SurvDataset(std::vector<SurvRecord> records, std::vector<std::string> covariate_names = {})
      : records_(std::move(records)), covariate_names_(std::move(covariate_names)) {
    strata_.assign(records_.size(), 0);
    stratum_labels_ = {"all"};
    validate();
  }

  SurvDataset(std::vector<SurvRecord> records, std::vector<std::string> covariate_names,
              std::vector<int> strata, std::vector<std::string> stratum_labels)
      : records_(std::move(records)),
        covariate_names_(std::move(covariate_names)),
        strata_(std::move(strata)),
        stratum_labels_(std::move(stratum_labels)) {
    validate();
  }

  /// Convenience: covariate-free dataset from parallel arrays.
  static SurvDataset from_arrays(const std::vector<double>& times, const std::vector<int>& events) {
    if (times.size() != events.size()) throw InputError("times and events differ in length");
    std::vector<SurvRecord> recs;
    recs.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) recs.push_back({times[i], events[i], {}});
    return SurvDataset(std::move(recs));
  }

  const std::vector<SurvRecord>& records() const { return records_; }
  const SurvRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  std::size_t n_covariates() const { return covariate_names_.size(); }

  int stratum_of(std::size_t i) const { return strata_[i]; }
  const std::vector<int>& strata() const { return strata_; }
  std::size_t n_strata() const { return stratum_labels_.size(); }
  const std::vector<std::string>& stratum_labels() const { return stratum_labels_; }

  std::size_t covariate_index(const std::string& name) const {
    for (std::size_t k = 0; k < covariate_names_.size(); ++k) {
      if (covariate_names_[k] == name) return k;
    }
    throw InputError("unknown covariate '" + name + "'");
  }

  std::size_t n_events() const {
    std::size_t n = 0;
    for (const auto& r : records_) n += static_cast<std::size_t>(r.event);
    return n;
  }

  double total_time() const {
    double s = 0.0;
    for (const auto& r : records_) s += r.time;
    return s;
  }

  double max_time() const {
    double m = 0.0;
    for (const auto& r : records_) m = std::max(m, r.time);
    return m;
  }

  /// Records satisfying `keep`; covariates and stratum labels are carried over.
  SurvDataset filter(const std::function<bool(const SurvRecord&, int stratum)>& keep) const {
    std::vector<SurvRecord> recs;
    std::vector<int> strata;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (keep(records_[i], strata_[i])) {
        recs.push_back(records_[i]);
        strata.push_back(strata_[i]);
      }
    }
    return SurvDataset(std::move(recs), covariate_names_, std::move(strata), stratum_labels_);
  }

  /// Keep only the named covariate columns (in the given order).
  SurvDataset select(const std::vector<std::string>& names) const {
    std::vector<std::size_t> idx;
    for (const auto& n : names) idx.push_back(covariate_index(n));
    std::vector<SurvRecord> recs;
    recs.reserve(records_.size());
    for (const auto& r : records_) {
      SurvRecord c{r.time, r.event, {}};
      for (auto k : idx) c.covariates.push_back(r.covariates[k]);
      recs.push_back(std::move(c));
    }
    return SurvDataset(std::move(recs), names, strata_, stratum_labels_);
  }

  /// Subjects whose covariates are all zero (the reference group).
  SurvDataset baseline_subjects() const {
    return filter([](const SurvRecord& r, int) {
      return std::all_of(r.covariates.begin(), r.covariates.end(), [](double x) { return x == 0.0; });
    });
  }

 private:
  void validate() const {
    if (strata_.size() != records_.size()) throw InputError("stratum labels do not match record count");
    const std::size_t dim = covariate_names_.size();
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      const std::string where = " (record " + std::to_string(i + 1) + ")";
      if (!std::isfinite(r.time) || r.time <= 0.0) {
        throw InputError("survival time must be finite and > 0" + where);
      }
      if (r.event != 0 && r.event != 1) throw InputError("event indicator must be 0 or 1" + where);
      if (r.covariates.size() != dim) throw InputError("covariate dimension mismatch" + where);
      for (double x : r.covariates) {
        if (!std::isfinite(x)) throw InputError("missing or non-finite covariate" + where);
      }
      if (strata_[i] < 0 || static_cast<std::size_t>(strata_[i]) >= stratum_labels_.size()) {
        throw InputError("stratum label out of range" + where);
      }
    }
  }

  std::vector<SurvRecord> records_;
  std::vector<std::string> covariate_names_;
  std::vector<int> strata_;
  std::vector<std::string> stratum_labels_{"all"};
};

/// Assign NPH strata from the joint levels of the named columns.
///
/// Levels are ordered lexicographically by value, so the combination with the
/// smallest values (all zeros for indicator columns) becomes stratum 0. The
/// named columns stay in the covariate vector; callers that use them only as
/// strata should `select` them away.
inline SurvDataset with_strata(const SurvDataset& data, const std::vector<std::string>& columns) {
  if (columns.empty()) {
    return SurvDataset(data.records(), data.covariate_names(), std::vector<int>(data.size(), 0), {"all"});
  }
  std::vector<std::size_t> idx;
  for (const auto& c : columns) idx.push_back(data.covariate_index(c));
  std::map<std::vector<double>, int> levels;
  for (const auto& r : data.records()) {
    std::vector<double> key;
    for (auto k : idx) key.push_back(r.covariates[k]);
    levels.emplace(std::move(key), 0);
  }
  std::vector<std::string> labels;
  int next = 0;
  for (auto& [key, id] : levels) {
    id = next++;
    std::string label;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k) label += ",";
      label += columns[k] + "=" + format_double(key[k]);
    }
    labels.push_back(std::move(label));
  }
  std::vector<int> strata;
  strata.reserve(data.size());
  for (const auto& r : data.records()) {
    std::vector<double> key;
    for (auto k : idx) key.push_back(r.covariates[k]);
    strata.push_back(levels.at(key));
  }
  return SurvDataset(data.records(), data.covariate_names(), std::move(strata), std::move(labels));
}

/// Descriptive summary printed by the dataset validator.
struct DatasetSummary {
  std::size_t n = 0;
  std::size_t n_events = 0;
  double censored_fraction = 0.0;
  double median_time = 0.0;  // median of all observed (event or censoring) times
  double min_time = 0.0;
  double max_time = 0.0;

  /// Whole-percent censoring as reported to users.
  long censored_percent() const { return std::lround(100.0 * censored_fraction); }
  /// Median observed time rounded to whole time units (half away from zero).
  long median_time_rounded() const { return std::lround(median_time); }
};

inline DatasetSummary summarize(const SurvDataset& data) {
  DatasetSummary s;
  s.n = data.size();
  if (s.n == 0) return s;
  s.n_events = data.n_events();
  s.censored_fraction = 1.0 - static_cast<double>(s.n_events) / static_cast<double>(s.n);
  std::vector<double> times;
  times.reserve(s.n);
  for (const auto& r : data.records()) times.push_back(r.time);
  std::sort(times.begin(), times.end());
  s.median_time = quantile_sorted(times, 0.5);
  s.min_time = times.front();
  s.max_time = times.back();
  return s;
}

}  // namespace hazbench
