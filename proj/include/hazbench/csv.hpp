#pragma once

#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "formula.hpp"
#include "grid.hpp"

namespace hazbench {

/// Plain comma-separated table with a header row. Fields may be wrapped in
/// double quotes; embedded commas inside quotes are not supported.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (header[k] == name) return k;
    }
    return std::nullopt;
  }

  std::size_t column(const std::string& name) const {
    if (auto k = find(name)) return *k;
    throw InputError("missing column '" + name + "'");
  }
};

namespace detail {

inline std::string trim_field(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  s = s.substr(b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim_field(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto fields = detail::split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw InputError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw InputError("CSV input has no header row");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_csv(in);
}

/// Replace a categorical column by 0/1 indicator columns `name_level` for every
/// level except the first (levels sorted numerically when all numeric, else
/// lexically). Returns the new column names. Missing cells stay missing.
inline std::vector<std::string> expand_factor(CsvTable& table, const std::string& name) {
  const std::size_t col = table.column(name);
  std::vector<std::string> levels;
  bool numeric = true;
  {
    std::set<std::string> seen;
    for (const auto& r : table.rows) {
      if (is_missing_token(r[col])) continue;
      if (seen.insert(r[col]).second) levels.push_back(r[col]);
      try {
        parse_double(r[col]);
      } catch (const InputError&) {
        numeric = false;
      }
    }
  }
  if (numeric) {
    std::sort(levels.begin(), levels.end(),
              [](const std::string& a, const std::string& b) { return parse_double(a) < parse_double(b); });
  } else {
    std::sort(levels.begin(), levels.end());
  }
  std::vector<std::string> names;
  for (std::size_t l = 1; l < levels.size(); ++l) {
    std::string lv = levels[l];
    for (auto& c : lv) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) c = '_';
    }
    names.push_back(name + "_" + lv);
  }
  for (auto& r : table.rows) {
    const std::string v = r[col];
    for (std::size_t l = 1; l < levels.size(); ++l) {
      r.push_back(is_missing_token(v) ? std::string("NA") : (v == levels[l] ? "1" : "0"));
    }
  }
  for (const auto& n : names) table.header.push_back(n);
  return names;
}

/// Rewrite formula terms that name expanded factors into their indicator columns.
inline ModelFormula substitute_terms(ModelFormula f, const std::map<std::string, std::vector<std::string>>& expanded) {
  auto rewrite = [&](std::vector<std::string>& terms) {
    std::vector<std::string> out;
    for (const auto& t : terms) {
      if (auto it = expanded.find(t); it != expanded.end()) {
        out.insert(out.end(), it->second.begin(), it->second.end());
      } else {
        out.push_back(t);
      }
    }
    terms = std::move(out);
  };
  rewrite(f.ph_terms);
  rewrite(f.nph_terms);
  return f;
}

struct IngestOptions {
  bool complete_cases = false;  // drop rows with missing model values instead of failing
};

struct IngestResult {
  SurvDataset data;        // covariates = ph_terms then nph_terms, strata from nph_terms
  std::size_t dropped = 0;
};

/// Build a dataset from the columns a formula names. Time is decimal, event is
/// 0/1; missing values are rejected (or dropped with `complete_cases`), never
/// imputed. NPH terms become strata by their joint levels.
inline IngestResult dataset_from_table(const CsvTable& table, const ModelFormula& f, IngestOptions opts = {}) {
  const std::size_t tcol = table.column(f.time_col);
  const std::size_t ecol = table.column(f.event_col);
  std::vector<std::string> names = f.ph_terms;
  names.insert(names.end(), f.nph_terms.begin(), f.nph_terms.end());
  std::vector<std::size_t> cols;
  for (const auto& n : names) cols.push_back(table.column(n));

  IngestResult res;
  std::vector<SurvRecord> recs;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = "row " + std::to_string(i + 1) + ", column '";
    auto cell = [&](std::size_t c, const std::string& cname) -> std::optional<double> {
      if (is_missing_token(row[c])) {
        if (opts.complete_cases) return std::nullopt;
        throw InputError("missing value at " + where + cname + "'");
      }
      try {
        return parse_double(row[c]);
      } catch (const InputError& e) {
        throw InputError(std::string(e.what()) + " at " + where + cname + "'");
      }
    };
    auto t = cell(tcol, f.time_col);
    auto e = cell(ecol, f.event_col);
    std::vector<double> x;
    bool complete = t && e;
    for (std::size_t k = 0; k < cols.size() && complete; ++k) {
      auto v = cell(cols[k], names[k]);
      if (!v) complete = false;
      else x.push_back(*v);
    }
    if (!complete) {
      ++res.dropped;
      continue;
    }
    if (*e != 0.0 && *e != 1.0) throw InputError("event must be 0 or 1 at " + where + f.event_col + "'");
    if (!(*t > 0.0) || !std::isfinite(*t)) {
      throw InputError("time must be finite and > 0 at " + where + f.time_col + "'");
    }
    recs.push_back({*t, static_cast<int>(*e), std::move(x)});
  }
  if (recs.empty()) throw InputError("no usable rows in dataset");
  res.data = with_strata(SurvDataset(std::move(recs), names), f.nph_terms);
  return res;
}

/// Hazard curve CSV: a `# kind=...` line, then t_lo,t_hi,estimate,lower,upper,missing.
/// Numbers use shortest round-trip formatting so re-reading is bit-exact.
inline void write_hazard_csv(std::ostream& os, const HazardCurve& c) {
  os << "# kind=" << to_string(c.kind) << "\n";
  os << "t_lo,t_hi,estimate,lower,upper,missing\n";
  for (std::size_t j = 0; j < c.size(); ++j) {
    os << format_double(c.grid.lower(j)) << ',' << format_double(c.grid.upper(j)) << ','
       << format_double(c.values[j]) << ','
       << (c.has_bounds() ? format_double(c.lower[j]) : std::string("NA")) << ','
       << (c.has_bounds() ? format_double(c.upper[j]) : std::string("NA")) << ','
       << (c.is_missing(j) ? 1 : 0) << "\n";
  }
}

inline HazardCurve read_hazard_csv(std::istream& in) {
  std::string first;
  std::getline(in, first);
  CurveKind kind = CurveKind::hazard;
  const std::string tag = "# kind=";
  if (first.rfind(tag, 0) == 0) {
    kind = curve_kind_from_string(detail::trim_field(first.substr(tag.size())));
  } else {
    throw InputError("hazard CSV must start with '# kind=' line");
  }
  CsvTable t = read_csv(in);
  const auto c_lo = t.column("t_lo"), c_hi = t.column("t_hi"), c_est = t.column("estimate");
  const auto c_l = t.column("lower"), c_u = t.column("upper"), c_m = t.column("missing");
  if (t.rows.empty()) throw InputError("hazard CSV has no rows");
  std::vector<double> edges{parse_double(t.rows.front()[c_lo])};
  std::vector<double> v, lo, hi;
  std::vector<std::uint8_t> miss;
  bool bounds = false, any_missing = false;
  for (const auto& r : t.rows) {
    edges.push_back(parse_double(r[c_hi]));
    const bool m = r[c_m] == "1";
    any_missing = any_missing || m;
    miss.push_back(m ? 1 : 0);
    v.push_back(parse_double(r[c_est]));
    if (!is_missing_token(r[c_l])) bounds = true;
    lo.push_back(parse_double(r[c_l]));
    hi.push_back(parse_double(r[c_u]));
  }
  HazardCurve c(TimeGrid(std::move(edges)), std::move(v), kind);
  if (bounds) c.set_bounds(std::move(lo), std::move(hi));
  if (any_missing) c.missing = std::move(miss);
  return c;
}

}  // namespace hazbench
