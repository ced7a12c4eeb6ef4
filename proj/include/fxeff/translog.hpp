#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fxeff/error.hpp"
#include "fxeff/panel.hpp"

namespace fxeff {

// Declarative description of a translog cost frontier.
struct FrontierSpec {
  std::vector<std::string> outputs = {"loans", "deposits", "fee_income"};
  std::vector<std::string> prices = {"wage_rate", "capital_rate"};
  std::vector<std::string> risk_covariates = {
      "equity_ratio", "liquidity_ratio", "lt_loans_firms_ratio",
      "lt_loans_hh_ratio", "asset_growth_4q"};
  int trend_degree = 2;           // 0, 1 (t) or 2 (t and t^2/2)
  std::size_t normalization_price = 1;  // index into `prices`
  bool split_fx_loans = false;    // replace `loans` with {fx_loans, rub_loans}
  double fx_loans_offset = 1.0;   // ln(FX.Loans + offset) when splitting

  std::vector<std::string> effective_outputs() const {
    std::vector<std::string> out;
    for (const auto& o : outputs) {
      if (split_fx_loans && o == "loans") {
        out.push_back("fx_loans");
        out.push_back("rub_loans");
      } else {
        out.push_back(o);
      }
    }
    return out;
  }

  void validate() const {
    if (outputs.empty()) throw ConfigError("frontier spec: outputs empty");
    if (normalization_price >= prices.size())
      throw ConfigError("frontier spec: normalization_price out of range");
    if (trend_degree < 0 || trend_degree > 2)
      throw ConfigError("frontier spec: trend degree must be 0..2");
  }
};

enum class TermKind {
  LogLinear,   // ln x_a
  HalfSquare,  // (ln x_a)^2 / 2
  Cross,       // ln x_a * ln x_b
  Linear,      // raw (ratio-type) covariate
  Trend,       // t in [0, 1]
  TrendSq      // t^2 / 2
};

struct Term {
  TermKind kind;
  int a = -1;  // log-variable index
  int b = -1;
  std::string name;
};

struct DesignMatrix {
  Eigen::MatrixXd X;   // regressors, intercept excluded
  Eigen::VectorXd y;   // ln(COST / w_norm)
  std::vector<Term> terms;
  std::vector<std::string> log_vars;  // names of the log variables, outputs first
  std::size_t n_outputs = 0;          // leading log_vars that are outputs
  std::vector<std::string> bank_ids;
  std::vector<Quarter> quarters;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(X.cols()); }

  // Column of the first-order term for log variable `v`.
  std::size_t log_linear_column(std::size_t v) const {
    for (std::size_t c = 0; c < terms.size(); ++c)
      if (terms[c].kind == TermKind::LogLinear && terms[c].a == static_cast<int>(v))
        return c;
    throw Error("design: missing first-order term");
  }
};

inline std::size_t translog_term_count(std::size_t n_outputs, std::size_t n_prices,
                                       std::size_t n_risk, int trend_degree) {
  const std::size_t n_log = n_outputs + (n_prices - 1);
  return n_log + n_log + n_log * (n_log - 1) / 2 + n_risk +
         static_cast<std::size_t>(trend_degree);
}

inline DesignMatrix build_design(std::span<const PanelObservation> panel,
                                 const FrontierSpec& spec, CostChoice cost_choice) {
  spec.validate();
  const auto outputs = spec.effective_outputs();
  const std::size_t L = outputs.size();
  std::vector<PanelField> out_fields, price_fields, risk_fields;
  for (const auto& n : outputs) out_fields.push_back(panel_field(n));
  for (const auto& n : spec.prices) price_fields.push_back(panel_field(n));
  for (const auto& n : spec.risk_covariates) risk_fields.push_back(panel_field(n));
  const PanelField norm_field = price_fields[spec.normalization_price];

  std::vector<std::string> log_vars = outputs;
  std::vector<PanelField> nonnorm_prices;
  for (std::size_t k = 0; k < spec.prices.size(); ++k) {
    if (k == spec.normalization_price) continue;
    log_vars.push_back(spec.prices[k]);
    nonnorm_prices.push_back(price_fields[k]);
  }
  const std::size_t n_log = log_vars.size();

  std::vector<Term> terms;
  for (std::size_t v = 0; v < n_log; ++v)
    terms.push_back({TermKind::LogLinear, static_cast<int>(v), -1, "ln_" + log_vars[v]});
  for (std::size_t v = 0; v < n_log; ++v)
    terms.push_back({TermKind::HalfSquare, static_cast<int>(v), -1,
                     "half_sq_ln_" + log_vars[v]});
  for (std::size_t a = 0; a < n_log; ++a)
    for (std::size_t b = a + 1; b < n_log; ++b)
      terms.push_back({TermKind::Cross, static_cast<int>(a), static_cast<int>(b),
                       "ln_" + log_vars[a] + "_x_ln_" + log_vars[b]});
  for (const auto& n : spec.risk_covariates)
    terms.push_back({TermKind::Linear, -1, -1, n});
  if (spec.trend_degree >= 1) terms.push_back({TermKind::Trend, -1, -1, "trend"});
  if (spec.trend_degree >= 2) terms.push_back({TermKind::TrendSq, -1, -1, "half_trend_sq"});

  int qmin = panel.empty() ? 0 : panel[0].quarter.index;
  int qmax = qmin;
  for (const auto& o : panel) {
    qmin = std::min(qmin, o.quarter.index);
    qmax = std::max(qmax, o.quarter.index);
  }
  const double qspan = qmax > qmin ? static_cast<double>(qmax - qmin) : 1.0;

  DesignMatrix d;
  d.terms = terms;
  d.log_vars = log_vars;
  d.n_outputs = L;
  d.X.resize(static_cast<Eigen::Index>(panel.size()), static_cast<Eigen::Index>(terms.size()));
  d.y.resize(static_cast<Eigen::Index>(panel.size()));

  std::vector<double> lv(n_log);
  for (std::size_t r = 0; r < panel.size(); ++r) {
    const auto& o = panel[r];
    const double wn = o.*norm_field;
    if (!(wn > 0)) throw NonPositiveValue(spec.prices[spec.normalization_price], r);
    const double cost = cost_of(o, cost_choice);
    if (!(cost > 0)) throw NonPositiveValue("cost", r);

    for (std::size_t v = 0; v < L; ++v) {
      double val = o.*out_fields[v];
      if (spec.split_fx_loans && outputs[v] == "fx_loans") val += spec.fx_loans_offset;
      if (!(val > 0)) throw NonPositiveValue(outputs[v], r);
      lv[v] = std::log(val);
    }
    for (std::size_t k = 0; k < nonnorm_prices.size(); ++k) {
      const double w = o.*nonnorm_prices[k];
      if (!(w > 0)) throw NonPositiveValue("price", r);
      lv[L + k] = std::log(w / wn);
    }
    const double t = (static_cast<double>(o.quarter.index) - qmin) / qspan;

    for (std::size_t c = 0; c < terms.size(); ++c) {
      const Term& tm = terms[c];
      double x = 0;
      switch (tm.kind) {
        case TermKind::LogLinear: x = lv[tm.a]; break;
        case TermKind::HalfSquare: x = 0.5 * lv[tm.a] * lv[tm.a]; break;
        case TermKind::Cross: x = lv[tm.a] * lv[tm.b]; break;
        case TermKind::Linear: {
          const std::size_t ri = c - 2 * n_log - n_log * (n_log - 1) / 2;
          x = o.*risk_fields[ri];
          break;
        }
        case TermKind::Trend: x = t; break;
        case TermKind::TrendSq: x = 0.5 * t * t; break;
      }
      d.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x;
    }
    d.y(static_cast<Eigen::Index>(r)) = std::log(cost / wn);
    d.bank_ids.push_back(o.bank_id);
    d.quarters.push_back(o.quarter);
  }
  return d;
}

// d ln COST / d ln Y_j at one design row, analytically from the term
// structure. `beta` is aligned to the design columns (no intercept).
inline Eigen::VectorXd output_elasticities(const Eigen::VectorXd& beta,
                                           const DesignMatrix& d, std::size_t row) {
  if (static_cast<std::size_t>(beta.size()) != d.cols())
    throw Error("output_elasticities: coefficient/design mismatch");
  std::vector<double> lv(d.log_vars.size());
  for (std::size_t v = 0; v < d.log_vars.size(); ++v)
    lv[v] = d.X(static_cast<Eigen::Index>(row),
                static_cast<Eigen::Index>(d.log_linear_column(v)));
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.n_outputs));
  for (std::size_t c = 0; c < d.terms.size(); ++c) {
    const Term& t = d.terms[c];
    const double b = beta(static_cast<Eigen::Index>(c));
    switch (t.kind) {
      case TermKind::LogLinear:
        if (t.a < static_cast<int>(d.n_outputs)) e(t.a) += b;
        break;
      case TermKind::HalfSquare:
        if (t.a < static_cast<int>(d.n_outputs)) e(t.a) += b * lv[t.a];
        break;
      case TermKind::Cross:
        if (t.a < static_cast<int>(d.n_outputs)) e(t.a) += b * lv[t.b];
        if (t.b < static_cast<int>(d.n_outputs)) e(t.b) += b * lv[t.a];
        break;
      default:
        break;
    }
  }
  return e;
}

inline double returns_to_scale(const Eigen::VectorXd& beta, const DesignMatrix& d,
                               std::size_t row) {
  const double s = output_elasticities(beta, d, row).sum();
  if (s == 0.0) throw EstimationError("returns_to_scale: zero elasticity sum");
  return 1.0 / s;
}

}  // namespace fxeff
