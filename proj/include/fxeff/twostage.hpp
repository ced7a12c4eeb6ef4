#pragma once

// Two-stage counterfactual estimator of currency-adjusted efficiency when
// negative revaluations are unobserved: stage 1 purges exchange-rate
// pass-through from operating costs by a bank-FE regression on lagged NER
// regressors; stage 2 estimates an FX-augmented frontier (split loan outputs,
// NER level terms and interactions) with an FX-sensitive inefficiency mean.

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fxeff/error.hpp"
#include "fxeff/garch.hpp"
#include "fxeff/panel.hpp"
#include "fxeff/panelreg.hpp"
#include "fxeff/sfa.hpp"
#include "fxeff/translog.hpp"

namespace fxeff::twostage {

// Quarter-end NER levels, optionally with the underlying week-end levels for
// the volatility regressor. `first` is the quarter of levels[0]; the series
// may start before the panel to cover lags.
struct NerSeries {
  Quarter first;
  std::vector<double> levels;
  std::vector<double> weekly;  // weeks_per_quarter entries per quarter
  int weeks_per_quarter = 13;

  double level(int qindex) const {
    const int off = qindex - first.index;
    if (off < 0 || off >= static_cast<int>(levels.size()))
      throw InsufficientLags("ner quarter offset " + std::to_string(off));
    return levels[static_cast<std::size_t>(off)];
  }
  double log_level(int qindex) const {
    const double v = level(qindex);
    if (!(v > 0)) throw DataError("ner: non-positive level");
    return std::log(v);
  }
  bool covers(int qindex) const {
    const int off = qindex - first.index;
    return off >= 0 && off < static_cast<int>(levels.size());
  }
};

enum class NerRegressor { LogLevel, GarchVolatility };
enum class Variant { BothStages, FirstOnly, SecondOnly, OneStageCombined };
enum class ZeroFxPolicy { Offset, Drop };

struct TwoStageConfig {
  NerRegressor regressor = NerRegressor::GarchVolatility;
  int lags = 2;  // K: stage-1 regressor enters at lags 0..K
  Variant variant = Variant::BothStages;
  ZeroFxPolicy zero_fx = ZeroFxPolicy::Offset;
  double fx_offset = 1.0;
  FrontierSpec frontier;        // base spec; the FX split is applied internally
  sfa::InefficiencySpec ineff;  // baseline inefficiency covariates
  sfa::FitOptions fit = [] {
    sfa::FitOptions f;
    f.max_iterations = 2000;  // the augmented frontier needs a longer budget
    return f;
  }();

  void validate() const {
    if (lags < 0 || lags > 4) throw ConfigError("twostage: lags must be 0..4");
    if (zero_fx == ZeroFxPolicy::Offset && !(fx_offset > 0))
      throw ConfigError("twostage: fx_offset must be positive");
    frontier.validate();
  }
};

// Stage-1 regressor value per quarter of the NER series: the log level, or
// the quarterly RMS of GARCH(1,1) conditional volatilities fit on weekly log
// returns.
inline std::vector<double> regressor_series(const NerSeries& ner, NerRegressor kind) {
  if (kind == NerRegressor::LogLevel) {
    std::vector<double> out(ner.levels.size());
    for (std::size_t q = 0; q < out.size(); ++q)
      out[q] = ner.log_level(ner.first.index + static_cast<int>(q));
    return out;
  }
  if (ner.weekly.size() < ner.levels.size() * static_cast<std::size_t>(ner.weeks_per_quarter))
    throw DataError("twostage: weekly NER levels required for the volatility regressor");
  const std::vector<double> r = garch::log_returns(ner.weekly);
  const auto fit = garch::fit_garch(r);
  const std::vector<double> vol = garch::implied_volatility(fit);
  // Return i spans weeks i -> i+1; attribute it to the quarter of week i+1.
  std::vector<int> group(vol.size());
  for (std::size_t i = 0; i < vol.size(); ++i)
    group[i] = static_cast<int>((i + 1) / static_cast<std::size_t>(ner.weeks_per_quarter));
  const auto rms = garch::quarterly_rms(vol, group);
  std::vector<double> out(ner.levels.size(),
                          std::numeric_limits<double>::quiet_NaN());
  for (const auto& [q, v] : rms)
    if (q >= 0 && q < static_cast<int>(out.size()))
      out[static_cast<std::size_t>(q)] = v;
  for (double v : out)
    if (!std::isfinite(v)) throw DataError("twostage: volatility series incomplete");
  return out;
}

struct StageOneFit {
  std::vector<double> beta;  // NER regressor coefficients, lags 0..K
  std::vector<double> se;
  reg::RegressionFit fit;    // full within regression (NER lags + controls)
  std::map<std::string, double> bank_fe;
  double r2_within = 0;
  // ln OC minus the fitted NER part (Eq. 5); the bank effect stays in.
  std::vector<double> purged_log_costs;  // aligned to the input panel rows
  std::vector<double> ner_part;          // subtracted component per row
};

namespace detail {

inline void require_coverage(std::span<const PanelObservation> panel,
                             const NerSeries& ner, int lags) {
  for (const auto& o : panel) {
    if (!ner.covers(o.quarter.index - lags) || !ner.covers(o.quarter.index))
      throw InsufficientLags("quarter " + o.quarter.str() + " with K=" +
                             std::to_string(lags));
  }
}

// Stage-1 regressor at a fixed lag, keyed by the observation's quarter.
inline reg::ColumnExpr ner_lag_expr(const NerSeries& ner,
                                    const std::vector<double>& series, int lag) {
  const int first = ner.first.index;
  const int n = static_cast<int>(series.size());
  return {"ner_reg_lag" + std::to_string(lag),
          [series, first, n, lag](const reg::EvalContext& c, std::size_t r) {
            const int off = c.panel[r].quarter.index - lag - first;
            return off >= 0 && off < n ? series[static_cast<std::size_t>(off)]
                                       : reg::kNaN;
          }};
}

}  // namespace detail

// Eq. 4: within-FE regression of ln OC on the NER regressor at lags 0..K,
// with ln TA and a quadratic deterministic trend as controls; Eq. 5 purge.
inline StageOneFit stage_one(std::span<const PanelObservation> panel,
                             const NerSeries& ner, const TwoStageConfig& cfg) {
  cfg.validate();
  detail::require_coverage(panel, ner, cfg.lags);
  const std::vector<double> series = regressor_series(ner, cfg.regressor);

  int qmin = panel.empty() ? 0 : panel[0].quarter.index, qmax = qmin;
  for (const auto& o : panel) {
    qmin = std::min(qmin, o.quarter.index);
    qmax = std::max(qmax, o.quarter.index);
  }
  const double qspan = qmax > qmin ? static_cast<double>(qmax - qmin) : 1.0;

  reg::RegressionSpec spec;
  spec.dependent = reg::derived("ln_oc", [](const PanelObservation& o) {
    const double oc = cost_of(o, CostChoice::OC);
    return oc > 0 ? std::log(oc) : reg::kNaN;
  });
  for (int k = 0; k <= cfg.lags; ++k)
    spec.regressors.push_back(detail::ner_lag_expr(ner, series, k));
  spec.regressors.push_back(reg::ln_total_assets());
  spec.regressors.push_back({"trend", [qmin, qspan](const reg::EvalContext& c, std::size_t r) {
                               return (c.panel[r].quarter.index - qmin) / qspan;
                             }});
  spec.regressors.push_back({"half_trend_sq", [qmin, qspan](const reg::EvalContext& c, std::size_t r) {
                               const double t = (c.panel[r].quarter.index - qmin) / qspan;
                               return 0.5 * t * t;
                             }});
  spec.bank_fe = true;

  StageOneFit out;
  out.fit = reg::fit_fe(panel, spec);
  out.r2_within = out.fit.r2_within;
  for (int k = 0; k <= cfg.lags; ++k) {
    const std::size_t j = out.fit.column("ner_reg_lag" + std::to_string(k));
    out.beta.push_back(out.fit.coef(static_cast<Eigen::Index>(j)));
    out.se.push_back(out.fit.se(static_cast<Eigen::Index>(j)));
  }

  // Purge only the NER component (Eq. 5): the FE and controls stay in the
  // purged cost so the frontier still explains them.
  out.purged_log_costs.assign(panel.size(), std::numeric_limits<double>::quiet_NaN());
  out.ner_part.assign(panel.size(), std::numeric_limits<double>::quiet_NaN());
  std::map<std::string, std::pair<double, std::size_t>> fe_acc;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    const auto& o = panel[i];
    const double oc = cost_of(o, CostChoice::OC);
    if (!(oc > 0)) continue;
    double part = 0;
    for (int k = 0; k <= cfg.lags; ++k)
      part += out.beta[static_cast<std::size_t>(k)] *
              series[static_cast<std::size_t>(o.quarter.index - k - ner.first.index)];
    out.ner_part[i] = part;
    out.purged_log_costs[i] = std::log(oc) - part;

    // Residual intercept per bank: y minus the full fitted RHS.
    const double t = (o.quarter.index - qmin) / qspan;
    double xb = part;
    xb += out.fit.coef(static_cast<Eigen::Index>(out.fit.column("ln_ta"))) *
          std::log(o.total_assets);
    xb += out.fit.coef(static_cast<Eigen::Index>(out.fit.column("trend"))) * t;
    xb += out.fit.coef(static_cast<Eigen::Index>(out.fit.column("half_trend_sq"))) *
          0.5 * t * t;
    auto& [sum, cnt] = fe_acc[o.bank_id];
    sum += std::log(oc) - xb;
    ++cnt;
  }
  for (const auto& [bank, sc] : fe_acc)
    out.bank_fe[bank] = sc.first / static_cast<double>(sc.second);
  return out;
}

struct StageTwoFit {
  sfa::SfaFit fit;
  std::vector<sfa::EfficiencyScore> scores;
  std::vector<std::string> dropped_terms;  // pruned as unidentified
  double fx_offset = 0;                    // 0 when rows were dropped instead
  std::size_t n_obs = 0;
};

namespace detail {

// Greedy rank filter: keep a column only if its residual after projecting on
// the intercept and the already-kept columns is non-negligible. Operates on
// the frontier design and the inefficiency covariates alike so degenerate FX
// exposure (e.g. fx_loans identically zero) reduces to the plain model.
inline void prune_columns(Eigen::MatrixXd& X, std::vector<std::string>& names,
                          bool with_intercept, std::vector<std::string>& dropped) {
  const Eigen::Index n = X.rows();
  std::vector<Eigen::VectorXd> basis;
  if (with_intercept)
    basis.push_back(Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n)));
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    Eigen::VectorXd v = X.col(j);
    const double norm0 = v.norm();
    for (int pass = 0; pass < 2; ++pass)  // twice for numerical orthogonality
      for (const auto& b : basis) v -= b.dot(v) * b;
    if (norm0 <= 0 || v.norm() < 1e-7 * std::max(1.0, norm0)) {
      dropped.push_back(names[static_cast<std::size_t>(j)]);
      continue;
    }
    basis.push_back(v / v.norm());
    keep.push_back(j);
  }
  if (keep.size() == static_cast<std::size_t>(X.cols())) return;
  Eigen::MatrixXd Xk(n, static_cast<Eigen::Index>(keep.size()));
  std::vector<std::string> nk;
  for (std::size_t c = 0; c < keep.size(); ++c) {
    Xk.col(static_cast<Eigen::Index>(c)) = X.col(keep[c]);
    nk.push_back(names[static_cast<std::size_t>(keep[c])]);
  }
  X = std::move(Xk);
  names = std::move(nk);
}

inline void append_column(Eigen::MatrixXd& X, const Eigen::VectorXd& col) {
  X.conservativeResize(Eigen::NoChange, X.cols() + 1);
  X.col(X.cols() - 1) = col;
}

}  // namespace detail

// Eq. 6 frontier (split loans, NER level terms, output x NER and price x NER
// interactions) with the Eq. 7 inefficiency mean, on the purged (or raw)
// costs. `ner_part` holds the stage-1 component to subtract per panel row, or
// is empty when no purge applies. `augment_fx` switches the Eq. 6/7 FX terms
// on; `stage1_regressors` adds the Eq. 4 lag terms directly to the frontier
// (the one-stage-combined variant).
inline StageTwoFit stage_two(std::span<const PanelObservation> panel,
                             const NerSeries& ner, const TwoStageConfig& cfg,
                             std::span<const double> ner_part = {},
                             bool augment_fx = true,
                             bool stage1_regressors = false) {
  cfg.validate();
  detail::require_coverage(panel, ner, augment_fx ? std::max(cfg.lags, 4) : cfg.lags);

  // Zero-FX handling: offset inside the log, or drop the affected rows.
  std::vector<PanelObservation> kept_rows;
  std::vector<double> kept_part;
  kept_rows.reserve(panel.size());
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (augment_fx && cfg.zero_fx == ZeroFxPolicy::Drop && !(panel[i].fx_loans > 0))
      continue;
    if (!(cost_of(panel[i], CostChoice::OC) > 0)) continue;
    kept_rows.push_back(panel[i]);
    if (!ner_part.empty()) kept_part.push_back(ner_part[i]);
  }
  if (kept_rows.empty()) throw EmptyPanel();

  FrontierSpec spec = cfg.frontier;
  spec.split_fx_loans = augment_fx;
  spec.fx_loans_offset = cfg.fx_offset;
  DesignMatrix d = build_design(kept_rows, spec, CostChoice::OC);
  if (!kept_part.empty())
    for (std::size_t i = 0; i < kept_rows.size(); ++i)
      d.y(static_cast<Eigen::Index>(i)) -= kept_part[i];

  std::vector<std::string> x_names;
  for (const auto& t : d.terms) x_names.push_back(t.name);
  const Eigen::Index n = d.X.rows();

  if (augment_fx) {
    Eigen::VectorXd ln_ner(n);
    for (Eigen::Index i = 0; i < n; ++i)
      ln_ner(i) = ner.log_level(kept_rows[static_cast<std::size_t>(i)].quarter.index);
    detail::append_column(d.X, ln_ner);
    x_names.push_back("ln_ner");
    detail::append_column(d.X, 0.5 * ln_ner.cwiseProduct(ln_ner));
    x_names.push_back("half_sq_ln_ner");
    for (std::size_t v = 0; v < d.log_vars.size(); ++v) {
      const Eigen::VectorXd lv = d.X.col(static_cast<Eigen::Index>(d.log_linear_column(v)));
      detail::append_column(d.X, lv.cwiseProduct(ln_ner));
      x_names.push_back("ln_" + d.log_vars[v] + "_x_ln_ner");
    }
  }
  if (stage1_regressors) {
    const std::vector<double> series = regressor_series(ner, cfg.regressor);
    for (int k = 0; k <= cfg.lags; ++k) {
      Eigen::VectorXd c(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const int off = kept_rows[static_cast<std::size_t>(i)].quarter.index - k -
                        ner.first.index;
        c(i) = series[static_cast<std::size_t>(off)];
      }
      detail::append_column(d.X, c);
      x_names.push_back("ner_reg_lag" + std::to_string(k));
    }
  }

  Eigen::MatrixXd Z = sfa::build_z(kept_rows, cfg.ineff);
  std::vector<std::string> z_names = cfg.ineff.column_names();
  if (augment_fx) {
    // Eq. 7: mu + a1 FX.Loans/TA + a2 d4 ln NER + a3 interaction, the delta
    // in NER always from the quarter-end levels.
    Eigen::VectorXd fx_ta(n), d4(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& o = kept_rows[static_cast<std::size_t>(i)];
      fx_ta(i) = o.total_assets > 0 ? o.fx_loans / o.total_assets : 0.0;
      d4(i) = ner.log_level(o.quarter.index) - ner.log_level(o.quarter.index - 4);
    }
    detail::append_column(Z, fx_ta);
    z_names.push_back("z_fx_loans_ta");
    detail::append_column(Z, d4);
    z_names.push_back("z_d4_ln_ner");
    detail::append_column(Z, fx_ta.cwiseProduct(d4));
    z_names.push_back("z_fx_loans_ta_x_d4_ln_ner");
  }

  StageTwoFit out;
  out.fx_offset = (augment_fx && cfg.zero_fx == ZeroFxPolicy::Offset) ? cfg.fx_offset : 0.0;
  detail::prune_columns(d.X, x_names, true, out.dropped_terms);
  // The Z constant column is its own intercept, so the prune basis starts
  // empty and picks it up first.
  detail::prune_columns(Z, z_names, false, out.dropped_terms);

  // Rebuild the term list to match the pruned columns so make_sfa_data names
  // the parameters correctly; pruned-away augmented terms are plain linear.
  std::vector<Term> terms;
  for (const auto& nm : x_names) {
    Term t{TermKind::Linear, -1, -1, nm};
    for (const auto& orig : d.terms)
      if (orig.name == nm) {
        t = orig;
        break;
      }
    terms.push_back(t);
  }
  d.terms = std::move(terms);

  sfa::SfaData data = sfa::make_sfa_data(d, Z, z_names);
  out.fit = sfa::fit_frontier(data, cfg.fit, cfg.ineff.include_constant);
  out.n_obs = data.n();

  // Currency-adjusted scores: efficiency is defined given the bank's currency
  // structure under the observed NER volatility, so the fitted FX component
  // of the inefficiency mean is treated as a cost shifter (moved into the
  // frontier) rather than inefficiency before the conditional-mean scoring.
  std::vector<Eigen::Index> fx_cols;
  for (std::size_t j = 0; j < z_names.size(); ++j)
    if (z_names[j] == "z_fx_loans_ta" || z_names[j] == "z_d4_ln_ner" ||
        z_names[j] == "z_fx_loans_ta_x_d4_ln_ner")
      fx_cols.push_back(static_cast<Eigen::Index>(j));
  if (fx_cols.empty()) {
    out.scores = sfa::efficiency_scores(out.fit, data, d.quarters);
    return out;
  }
  sfa::SfaData adj = data;
  sfa::SfaFit afit = out.fit;
  const Eigen::Index qz = Z.cols();
  std::vector<bool> is_fx(static_cast<std::size_t>(qz), false);
  const bool purged = !ner_part.empty();
  for (Eigen::Index j : fx_cols) {
    const Eigen::VectorXd contrib = Z.col(j) * out.fit.delta(j);
    const bool common_time =
        z_names[static_cast<std::size_t>(j)] == "z_d4_ln_ner";
    if (purged || common_time) {
      // Levels already netted out of costs (stage-one purge), or competing
      // with the frontier's exchange-rate terms (the common depreciation
      // index): reallocate deviations only.
      adj.y -= contrib.array().matrix() -
               Eigen::VectorXd::Constant(contrib.size(), contrib.mean());
    } else {
      // Bank-specific FX terms are anchored by zero-exposure banks and move
      // in full.
      adj.y -= contrib;
    }
    is_fx[static_cast<std::size_t>(j)] = true;
  }
  adj.Z.resize(Z.rows(), qz - static_cast<Eigen::Index>(fx_cols.size()));
  afit.delta.resize(adj.Z.cols());
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < qz; ++j) {
    if (is_fx[static_cast<std::size_t>(j)]) continue;
    adj.Z.col(c) = Z.col(j);
    afit.delta(c) = out.fit.delta(j);
    ++c;
  }
  out.scores = sfa::efficiency_scores(afit, adj, d.quarters);
  return out;
}

struct TwoStageResult {
  std::optional<StageOneFit> stage1;
  StageTwoFit stage2;
};

inline TwoStageResult run_variant(std::span<const PanelObservation> panel,
                                  const NerSeries& ner, const TwoStageConfig& cfg) {
  cfg.validate();
  TwoStageResult out;
  switch (cfg.variant) {
    case Variant::BothStages: {
      out.stage1 = stage_one(panel, ner, cfg);
      out.stage2 = stage_two(panel, ner, cfg, out.stage1->ner_part, true, false);
      break;
    }
    case Variant::FirstOnly: {
      out.stage1 = stage_one(panel, ner, cfg);
      out.stage2 = stage_two(panel, ner, cfg, out.stage1->ner_part, false, false);
      break;
    }
    case Variant::SecondOnly:
      out.stage2 = stage_two(panel, ner, cfg, {}, true, false);
      break;
    case Variant::OneStageCombined:
      out.stage2 = stage_two(panel, ner, cfg, {}, true, true);
      break;
  }
  return out;
}

struct ComparisonRow {
  std::string label;
  std::size_t n = 0;
  double mean = 0, sd = 0, min = 0, max = 0;
};

namespace detail {

inline ComparisonRow summarize(const std::string& label,
                               std::span<const sfa::EfficiencyScore> scores) {
  std::vector<double> ce;
  ce.reserve(scores.size());
  for (const auto& s : scores) ce.push_back(s.ce);
  if (ce.empty()) throw EmptyPanel();
  ComparisonRow r;
  r.label = label;
  r.n = ce.size();
  r.mean = stats::mean(ce);
  r.sd = stats::sd(ce);
  r.min = *std::min_element(ce.begin(), ce.end());
  r.max = *std::max_element(ce.begin(), ce.end());
  return r;
}

inline std::vector<sfa::EfficiencyScore> plain_scores(
    std::span<const PanelObservation> panel, const TwoStageConfig& cfg,
    CostChoice choice) {
  const auto rows = filter_positive_cost(panel, choice);
  DesignMatrix d = build_design(rows, cfg.frontier, choice);
  Eigen::MatrixXd Z = sfa::build_z(rows, cfg.ineff);
  sfa::SfaData data = sfa::make_sfa_data(d, Z, cfg.ineff.column_names());
  sfa::SfaFit fit = sfa::fit_frontier(data, cfg.fit, cfg.ineff.include_constant);
  return sfa::efficiency_scores(fit, data, d.quarters);
}

}  // namespace detail

// Six-row comparison of mean efficiency: the biased (kept-cost) estimator,
// the four counterfactual variants, and the true (revals-dropped) estimator.
inline std::vector<ComparisonRow> comparison_table(
    std::span<const PanelObservation> panel, const NerSeries& ner,
    const TwoStageConfig& cfg) {
  cfg.validate();
  std::vector<ComparisonRow> rows;
  rows.push_back(detail::summarize(
      "kept", detail::plain_scores(panel, cfg, CostChoice::OC)));
  for (const auto& [label, variant] :
       std::vector<std::pair<std::string, Variant>>{
           {"first_only", Variant::FirstOnly},
           {"second_only", Variant::SecondOnly},
           {"one_stage", Variant::OneStageCombined},
           {"both_stages", Variant::BothStages}}) {
    TwoStageConfig c = cfg;
    c.variant = variant;
    rows.push_back(detail::summarize(label, run_variant(panel, ner, c).stage2.scores));
  }
  rows.push_back(detail::summarize(
      "dropped", detail::plain_scores(panel, cfg, CostChoice::CAOC)));
  return rows;
}

}  // namespace fxeff::twostage
