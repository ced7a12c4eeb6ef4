#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fxeff/csv.hpp"
#include "fxeff/error.hpp"
#include "fxeff/stats.hpp"

namespace fxeff {

// Year-quarter index, totally ordered. Encoded as "YYYYQn".
struct Quarter {
  int index = 0;  // year * 4 + (q - 1)

  int year() const { return index >= 0 ? index / 4 : (index - 3) / 4; }
  int q() const { return index - year() * 4 + 1; }

  static Quarter from(int year, int q) { return Quarter{year * 4 + q - 1}; }

  static Quarter parse(const std::string& s) {
    if (s.size() < 6 || (s[4] != 'Q' && s[4] != 'q'))
      throw DataError("bad quarter encoding: '" + s + "' (expected YYYYQn)");
    const int year = std::stoi(s.substr(0, 4));
    const int q = std::stoi(s.substr(5));
    if (q < 1 || q > 4) throw DataError("bad quarter number in '" + s + "'");
    return from(year, q);
  }

  std::string str() const {
    return std::to_string(year()) + "Q" + std::to_string(q());
  }

  auto operator<=>(const Quarter&) const = default;
};

enum class Ownership { DomesticPrivate, Big4, OtherState, Foreign };

inline Ownership parse_ownership(const std::string& s) {
  if (s == "DomesticPrivate") return Ownership::DomesticPrivate;
  if (s == "Big4") return Ownership::Big4;
  if (s == "OtherState") return Ownership::OtherState;
  if (s == "Foreign") return Ownership::Foreign;
  throw DataError("unknown ownership group: '" + s + "'");
}

inline std::string ownership_name(Ownership o) {
  switch (o) {
    case Ownership::DomesticPrivate: return "DomesticPrivate";
    case Ownership::Big4: return "Big4";
    case Ownership::OtherState: return "OtherState";
    case Ownership::Foreign: return "Foreign";
  }
  return "?";
}

// One bank-quarter row. Monetary fields share one currency unit; ratio
// fields are in percent unless noted.
struct PanelObservation {
  std::string bank_id;
  Quarter quarter;

  double total_costs = 0;        // TC
  double interest_income = 0;    // II
  double interest_expenses = 0;  // IE
  double revals_pos = 0;         // Revals+
  double revals_neg = 0;         // Revals-
  double loans = 0;              // Y1
  double deposits = 0;           // Y2
  double fee_income = 0;         // Y3
  double fx_loans = 0;
  double rub_loans = 0;
  double wage_rate = 0;     // w1
  double capital_rate = 0;  // w2
  double equity_ratio = 0;  // EQ/TA, percent
  double liquidity_ratio = 0;
  double total_assets = 0;  // TA
  double lt_loans_firms_ratio = 0;
  double lt_loans_hh_ratio = 0;
  double asset_growth_4q = 0;  // Delta_4 ln TA, percent
  double foreign_assets_ratio = 0;
  double foreign_liabilities_ratio = 0;
  double net_fx_position = 0;  // signed fraction of TA
  double market_share_corp = 0;
  double market_share_hh = 0;
  double npl = 0;
  double gdp_growth_4q = 0;

  Ownership ownership = Ownership::DomesticPrivate;
  bool bailout = false;
  bool tight_regulation = false;
};

using PanelField = double PanelObservation::*;

// Registry of numeric fields, keyed by canonical column name.
inline const std::vector<std::pair<std::string, PanelField>>& panel_fields() {
  static const std::vector<std::pair<std::string, PanelField>> fields = {
      {"total_costs", &PanelObservation::total_costs},
      {"interest_income", &PanelObservation::interest_income},
      {"interest_expenses", &PanelObservation::interest_expenses},
      {"revals_pos", &PanelObservation::revals_pos},
      {"revals_neg", &PanelObservation::revals_neg},
      {"loans", &PanelObservation::loans},
      {"deposits", &PanelObservation::deposits},
      {"fee_income", &PanelObservation::fee_income},
      {"fx_loans", &PanelObservation::fx_loans},
      {"rub_loans", &PanelObservation::rub_loans},
      {"wage_rate", &PanelObservation::wage_rate},
      {"capital_rate", &PanelObservation::capital_rate},
      {"equity_ratio", &PanelObservation::equity_ratio},
      {"liquidity_ratio", &PanelObservation::liquidity_ratio},
      {"total_assets", &PanelObservation::total_assets},
      {"lt_loans_firms_ratio", &PanelObservation::lt_loans_firms_ratio},
      {"lt_loans_hh_ratio", &PanelObservation::lt_loans_hh_ratio},
      {"asset_growth_4q", &PanelObservation::asset_growth_4q},
      {"foreign_assets_ratio", &PanelObservation::foreign_assets_ratio},
      {"foreign_liabilities_ratio", &PanelObservation::foreign_liabilities_ratio},
      {"net_fx_position", &PanelObservation::net_fx_position},
      {"market_share_corp", &PanelObservation::market_share_corp},
      {"market_share_hh", &PanelObservation::market_share_hh},
      {"npl", &PanelObservation::npl},
      {"gdp_growth_4q", &PanelObservation::gdp_growth_4q},
  };
  return fields;
}

inline PanelField panel_field(const std::string& name) {
  for (const auto& [n, f] : panel_fields())
    if (n == name) return f;
  throw UnknownColumn(name);
}

// Columns that must be present and non-empty for a row to enter frontier
// estimation; empty cells elsewhere become NaN and the row is kept for
// regression-only use.
inline const std::set<std::string>& estimation_required_columns() {
  static const std::set<std::string> cols = {
      "total_costs", "interest_expenses", "revals_neg", "loans",  "deposits",
      "fee_income",  "wage_rate",         "capital_rate", "total_assets"};
  return cols;
}

struct CostMeasures {
  double oc = 0;                 // TC - IE
  double caoc = 0;               // TC - IE - Revals-
  double revals_share = 0;       // Revals- / TC
  double delta_revals_share = 0; // (Revals+ - Revals-) / TC
};

inline CostMeasures derive_cost_measures(const PanelObservation& o) {
  if (!(o.total_costs > 0)) throw DataError("non-positive total costs");
  CostMeasures m;
  m.oc = o.total_costs - o.interest_expenses;
  m.caoc = m.oc - o.revals_neg;
  m.revals_share = o.revals_neg / o.total_costs;
  m.delta_revals_share = (o.revals_pos - o.revals_neg) / o.total_costs;
  return m;
}

struct CleaningReport {
  std::size_t rows_in = 0;
  std::size_t rows_out = 0;
  std::map<std::string, std::size_t> winsorized_cells;
  std::size_t banks_dropped_short_history = 0;
  std::size_t flagged_nonpositive_caoc = 0;
};

struct CleaningConfig {
  std::vector<std::string> ratio_columns = {
      "equity_ratio",        "liquidity_ratio",
      "lt_loans_firms_ratio", "lt_loans_hh_ratio",
      "foreign_assets_ratio", "foreign_liabilities_ratio"};
  double ratio_lo = 0.01;
  double ratio_hi = 0.99;
  std::string growth_column = "asset_growth_4q";
  double growth_lo = 0.01;
  double growth_hi = 0.95;
  std::size_t min_consecutive_quarters = 8;
  bool survivors_only = false;  // keep banks present in both first and last quarter
};

struct IngestResult {
  std::vector<PanelObservation> observations;
  std::size_t rows_rejected_missing = 0;
};

// Column mapping: canonical name -> CSV header name. Unmapped canonical
// names default to themselves.
using Schema = std::map<std::string, std::string>;

inline IngestResult ingest_panel(const csv::Table& table, const Schema& schema = {}) {
  auto mapped = [&](const std::string& canonical) {
    auto it = schema.find(canonical);
    return it == schema.end() ? canonical : it->second;
  };
  auto require_col = [&](const std::string& canonical) {
    auto idx = table.column(mapped(canonical));
    if (!idx) throw MissingColumn(mapped(canonical));
    return *idx;
  };

  const std::size_t bank_col = require_col("bank_id");
  const std::size_t quarter_col = require_col("quarter");
  const std::size_t ownership_col = require_col("ownership");
  const std::size_t bailout_col = require_col("bailout");
  const std::size_t tight_col = require_col("tight_regulation");

  std::vector<std::pair<std::size_t, std::pair<std::string, PanelField>>> numeric;
  for (const auto& nf : panel_fields()) numeric.push_back({require_col(nf.first), nf});

  IngestResult res;
  std::set<std::pair<std::string, int>> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    PanelObservation o;
    o.bank_id = row[bank_col];
    o.quarter = Quarter::parse(row[quarter_col]);
    if (!seen.insert({o.bank_id, o.quarter.index}).second)
      throw DuplicateBankQuarter(o.bank_id, o.quarter.str());
    o.ownership = parse_ownership(row[ownership_col]);
    o.bailout = csv::parse_double(row[bailout_col], r, "bailout") != 0.0;
    o.tight_regulation = csv::parse_double(row[tight_col], r, "tight_regulation") != 0.0;

    bool rejected = false;
    for (const auto& [col, nf] : numeric) {
      const std::string& cell = row[col];
      if (cell.empty()) {
        if (estimation_required_columns().count(nf.first)) {
          rejected = true;
          break;
        }
        o.*(nf.second) = std::numeric_limits<double>::quiet_NaN();
      } else {
        o.*(nf.second) = csv::parse_double(cell, r, nf.first);
      }
    }
    if (rejected) {
      ++res.rows_rejected_missing;
      continue;
    }
    // loans decomposition tolerance after ingestion
    if (std::isfinite(o.fx_loans) && std::isfinite(o.rub_loans) && o.loans > 0) {
      const double gap = std::fabs(o.fx_loans + o.rub_loans - o.loans);
      if (gap > 1e-9 * std::max(1.0, o.loans))
        throw ParseError(r, "loans", "fx_loans + rub_loans != loans");
    }
    res.observations.push_back(std::move(o));
  }
  std::sort(res.observations.begin(), res.observations.end(),
            [](const PanelObservation& a, const PanelObservation& b) {
              return std::tie(a.bank_id, a.quarter.index) <
                     std::tie(b.bank_id, b.quarter.index);
            });
  return res;
}

inline IngestResult ingest_panel_file(const std::string& path, const Schema& schema = {}) {
  return ingest_panel(csv::read_file(path), schema);
}

namespace detail {

// Winsorize one pooled column in place. Thresholds are interpolated
// percentiles; out-of-range cells are replaced by the nearest sample value
// inside the interval, which makes a second pass a no-op.
inline std::size_t winsorize_column(std::vector<PanelObservation>& obs, PanelField f,
                                    double plo, double phi) {
  std::vector<double> sample;
  sample.reserve(obs.size());
  for (const auto& o : obs)
    if (std::isfinite(o.*f)) sample.push_back(o.*f);
  if (sample.size() < 2) return 0;
  std::sort(sample.begin(), sample.end());
  const double tlo = stats::percentile_sorted(sample, plo);
  const double thi = stats::percentile_sorted(sample, phi);
  const double vlo = *std::lower_bound(sample.begin(), sample.end(), tlo);
  const double vhi = *(std::upper_bound(sample.begin(), sample.end(), thi) - 1);
  std::size_t n = 0;
  for (auto& o : obs) {
    double& x = o.*f;
    if (!std::isfinite(x)) continue;
    if (x < tlo) {
      x = vlo;
      ++n;
    } else if (x > thi) {
      x = vhi;
      ++n;
    }
  }
  return n;
}

// Longest run of gap-free quarters; first run wins ties. Returns [begin, end).
inline std::pair<std::size_t, std::size_t> longest_run(std::span<const PanelObservation> rows) {
  std::size_t best_b = 0, best_e = 0, b = 0;
  for (std::size_t i = 1; i <= rows.size(); ++i) {
    const bool contiguous =
        i < rows.size() && rows[i].quarter.index == rows[i - 1].quarter.index + 1;
    if (!contiguous) {
      if (i - b > best_e - best_b) {
        best_b = b;
        best_e = i;
      }
      b = i;
    }
  }
  return {best_b, best_e};
}

}  // namespace detail

inline std::pair<std::vector<PanelObservation>, CleaningReport> clean_panel(
    std::vector<PanelObservation> obs, const CleaningConfig& cfg = {}) {
  if (obs.empty()) throw EmptyPanel();
  CleaningReport report;
  report.rows_in = obs.size();

  std::sort(obs.begin(), obs.end(), [](const PanelObservation& a, const PanelObservation& b) {
    return std::tie(a.bank_id, a.quarter.index) < std::tie(b.bank_id, b.quarter.index);
  });

  if (cfg.survivors_only) {
    int first_q = obs.front().quarter.index, last_q = obs.front().quarter.index;
    for (const auto& o : obs) {
      first_q = std::min(first_q, o.quarter.index);
      last_q = std::max(last_q, o.quarter.index);
    }
    std::set<std::string> present_first, present_last;
    for (const auto& o : obs) {
      if (o.quarter.index == first_q) present_first.insert(o.bank_id);
      if (o.quarter.index == last_q) present_last.insert(o.bank_id);
    }
    std::erase_if(obs, [&](const PanelObservation& o) {
      return !present_first.count(o.bank_id) || !present_last.count(o.bank_id);
    });
    if (obs.empty()) throw EmptyPanel();
  }

  // Short-history rule: keep only each bank's longest gap-free run, and drop
  // the bank entirely if that run is shorter than the minimum.
  std::vector<PanelObservation> kept;
  kept.reserve(obs.size());
  std::size_t i = 0;
  while (i < obs.size()) {
    std::size_t j = i;
    while (j < obs.size() && obs[j].bank_id == obs[i].bank_id) ++j;
    auto [b, e] = detail::longest_run(std::span(obs).subspan(i, j - i));
    if (e - b >= cfg.min_consecutive_quarters) {
      for (std::size_t k = i + b; k < i + e; ++k) kept.push_back(std::move(obs[k]));
    } else {
      ++report.banks_dropped_short_history;
    }
    i = j;
  }
  obs = std::move(kept);

  for (const auto& name : cfg.ratio_columns) {
    report.winsorized_cells[name] =
        detail::winsorize_column(obs, panel_field(name), cfg.ratio_lo, cfg.ratio_hi);
  }
  if (!cfg.growth_column.empty()) {
    report.winsorized_cells[cfg.growth_column] = detail::winsorize_column(
        obs, panel_field(cfg.growth_column), cfg.growth_lo, cfg.growth_hi);
  }

  for (const auto& o : obs) {
    if (o.total_costs > 0 && !(derive_cost_measures(o).caoc > 0))
      ++report.flagged_nonpositive_caoc;
  }
  report.rows_out = obs.size();
  return {std::move(obs), report};
}

// Emits the same schema ingest_panel reads: identity round trip guaranteed.
inline void write_panel_csv(std::ostream& os, std::span<const PanelObservation> obs) {
  csv::Writer w(os);
  std::vector<std::string> header = {"bank_id", "quarter", "ownership", "bailout",
                                     "tight_regulation"};
  for (const auto& [name, f] : panel_fields()) header.push_back(name);
  w.row(header);
  for (const auto& o : obs) {
    std::vector<std::string> row = {o.bank_id, o.quarter.str(), ownership_name(o.ownership),
                                    o.bailout ? "1" : "0", o.tight_regulation ? "1" : "0"};
    for (const auto& [name, f] : panel_fields()) {
      const double v = o.*f;
      row.push_back(std::isfinite(v) ? csv::format(v) : "");
    }
    w.row(row);
  }
}

enum class CostChoice { OC, CAOC };

inline double cost_of(const PanelObservation& o, CostChoice c) {
  const auto m = derive_cost_measures(o);
  return c == CostChoice::OC ? m.oc : m.caoc;
}

// Rows usable for log-cost estimation under the chosen cost measure.
inline std::vector<PanelObservation> filter_positive_cost(
    std::span<const PanelObservation> obs, CostChoice choice) {
  std::vector<PanelObservation> out;
  out.reserve(obs.size());
  for (const auto& o : obs)
    if (o.total_costs > 0 && cost_of(o, choice) > 0) out.push_back(o);
  return out;
}

}  // namespace fxeff
