#pragma once

// Panel fixed-effects regression engine: column expressions with lags and
// interactions, one/two-way within demeaning, cluster-robust and bootstrap
// inference, exactly identified IV, and the applied regression suites.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fxeff/error.hpp"
#include "fxeff/panel.hpp"
#include "fxeff/sfa.hpp"
#include "fxeff/stats.hpp"

namespace fxeff::reg {

// ---- Column expressions --------------------------------------------------

// Evaluation context: row-aligned panel plus a (bank, quarter) lookup so
// expressions can reference lagged rows. NaN marks a missing value; rows
// with any NaN are listwise-deleted before estimation.
struct EvalContext {
  std::span<const PanelObservation> panel;
  std::map<std::pair<std::string, int>, std::size_t> index;

  explicit EvalContext(std::span<const PanelObservation> p) : panel(p) {
    for (std::size_t i = 0; i < p.size(); ++i)
      index[{p[i].bank_id, p[i].quarter.index}] = i;
  }

  const PanelObservation* lagged(std::size_t row, int lag) const {
    if (lag == 0) return &panel[row];
    auto it = index.find({panel[row].bank_id, panel[row].quarter.index - lag});
    return it == index.end() ? nullptr : &panel[it->second];
  }
};

using ExprFn = std::function<double(const EvalContext&, std::size_t)>;

struct ColumnExpr {
  std::string name;
  ExprFn fn;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Raw field or ownership/flag dummy, optionally lagged.
inline ColumnExpr col(const std::string& field, int lag = 0) {
  std::string nm = lag ? field + "_lag" + std::to_string(lag) : field;
  return {nm, [field, lag](const EvalContext& c, std::size_t r) {
            const PanelObservation* o = c.lagged(r, lag);
            return o ? sfa::z_value(*o, field) : kNaN;
          }};
}

// Row-level function of a (possibly lagged) observation.
inline ColumnExpr derived(const std::string& name,
                          std::function<double(const PanelObservation&)> f, int lag = 0) {
  std::string nm = lag ? name + "_lag" + std::to_string(lag) : name;
  return {nm, [f = std::move(f), lag](const EvalContext& c, std::size_t r) {
            const PanelObservation* o = c.lagged(r, lag);
            return o ? f(*o) : kNaN;
          }};
}

inline ColumnExpr interact(const ColumnExpr& a, const ColumnExpr& b) {
  return {a.name + "_x_" + b.name,
          [fa = a.fn, fb = b.fn](const EvalContext& c, std::size_t r) {
            return fa(c, r) * fb(c, r);
          }};
}

inline ColumnExpr positive_part(const ColumnExpr& a) {
  return {a.name + "_pos", [f = a.fn](const EvalContext& c, std::size_t r) {
            return std::max(f(c, r), 0.0);
          }};
}

// Signed negative part: min(x, 0).
inline ColumnExpr negative_part(const ColumnExpr& a) {
  return {a.name + "_neg", [f = a.fn](const EvalContext& c, std::size_t r) {
            return std::min(f(c, r), 0.0);
          }};
}

inline ColumnExpr constant_expr(const std::string& name, double v) {
  return {name, [v](const EvalContext&, std::size_t) { return v; }};
}

// Values joined by (bank, quarter) key, e.g. efficiency scores.
inline ColumnExpr joined(const std::string& name,
                         const std::map<std::pair<std::string, int>, double>& values,
                         int lag = 0) {
  std::string nm = lag ? name + "_lag" + std::to_string(lag) : name;
  return {nm, [values, lag](const EvalContext& c, std::size_t r) {
            auto it = values.find(
                {c.panel[r].bank_id, c.panel[r].quarter.index - lag});
            return it == values.end() ? kNaN : it->second;
          }};
}

// Common derived columns.
inline ColumnExpr ln_total_assets(int lag = 0) {
  return derived("ln_ta", [](const PanelObservation& o) {
    return o.total_assets > 0 ? std::log(o.total_assets) : kNaN;
  }, lag);
}

inline ColumnExpr revals_share_expr(int lag = 0) {
  return derived("revals_share", [](const PanelObservation& o) {
    return o.total_costs > 0 ? o.revals_neg / o.total_costs : kNaN;
  }, lag);
}

// ---- Specification and fit -----------------------------------------------

struct BootstrapSpec {
  int replications = 200;
  std::uint64_t seed = 2024;
};

struct RegressionSpec {
  ColumnExpr dependent;
  std::vector<ColumnExpr> regressors;
  bool bank_fe = true;
  bool quarter_fe = false;
  bool cluster_by_bank = true;   // false: one cluster per observation
  bool standardize = false;      // divide each variable by its sample SD
  bool center_regressors = false;
  std::map<std::string, ColumnExpr> instruments;  // endogenous name -> instrument
  std::optional<BootstrapSpec> bootstrap;
  // Linear-combination tests on coefficients, by regressor name.
  std::vector<std::pair<std::string, std::vector<std::string>>> lincomb;
};

struct LinCombTest {
  std::string label;
  double estimate = 0;
  double se = 0;
};

struct RegressionFit {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  std::string se_method;  // "cluster" or "bootstrap"
  double r2_within = 0;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  bool weak_instrument = false;
  double first_stage_f = std::numeric_limits<double>::infinity();
  std::vector<LinCombTest> lincomb;
  Eigen::VectorXd dep_scale;  // [sd(y)] when standardized, for back-mapping
  std::vector<double> regressor_sd;  // original-scale SDs of each regressor

  std::size_t column(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return j;
    throw UnknownColumn(name);
  }
  double tstat(const std::string& name) const {
    const std::size_t j = column(name);
    return coef(j) / se(j);
  }
};

namespace detail {

struct Assembled {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;            // demeaned
  Eigen::MatrixXd Xraw;         // pre-demeaning (post-standardization)
  std::vector<std::string> names;
  std::vector<std::size_t> rows;        // panel rows kept
  std::vector<std::string> bank;        // per kept row
  std::vector<int> quarter;
  std::vector<double> x_sd;             // original-scale SD per column
  double y_sd = 1.0;
};

// Evaluate, listwise-delete, standardize/center.
inline Assembled assemble(const EvalContext& ctx, const RegressionSpec& spec) {
  const std::size_t n = ctx.panel.size();
  const std::size_t k = spec.regressors.size();
  std::vector<double> yv;
  std::vector<std::vector<double>> cols(k);
  Assembled a;
  for (std::size_t j = 0; j < k; ++j) a.names.push_back(spec.regressors[j].name);
  for (std::size_t r = 0; r < n; ++r) {
    const double y = spec.dependent.fn(ctx, r);
    if (!std::isfinite(y)) continue;
    std::vector<double> row(k);
    bool ok = true;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = spec.regressors[j].fn(ctx, r);
      if (!std::isfinite(row[j])) {
        ok = false;
        break;
      }
    }
    // Instruments belong to the estimation sample too.
    for (const auto& [endog, instr] : spec.instruments) {
      if (!ok) break;
      if (!std::isfinite(instr.fn(ctx, r))) ok = false;
    }
    if (!ok) continue;
    yv.push_back(y);
    for (std::size_t j = 0; j < k; ++j) cols[j].push_back(row[j]);
    a.rows.push_back(r);
    a.bank.push_back(ctx.panel[r].bank_id);
    a.quarter.push_back(ctx.panel[r].quarter.index);
  }
  const std::size_t m = yv.size();
  if (m < k + 2) throw TooFewObservations(spec.dependent.name);

  a.y = Eigen::Map<Eigen::VectorXd>(yv.data(), m);
  a.X.resize(m, k);
  for (std::size_t j = 0; j < k; ++j) {
    a.x_sd.push_back(stats::sd(cols[j]));
    double scale = 1.0, shift = 0.0;
    if (spec.standardize && a.x_sd[j] > 0) scale = a.x_sd[j];
    if (spec.center_regressors) shift = stats::mean(cols[j]);
    for (std::size_t i = 0; i < m; ++i) a.X(i, j) = (cols[j][i] - shift) / scale;
  }
  a.y_sd = 1.0;
  if (spec.standardize) {
    const double s = stats::sd(yv);
    if (s > 0) {
      a.y_sd = s;
      a.y /= s;
    }
  }
  a.Xraw = a.X;
  return a;
}

// Iterated within-demeaning over the requested FE dimensions, applied
// jointly to the columns of M (and y). Converges geometrically; for one-way
// FE a single pass is exact.
inline void demean(Eigen::MatrixXd& M, const std::vector<std::string>& bank,
                   const std::vector<int>& quarter, bool bank_fe, bool quarter_fe) {
  if (!bank_fe && !quarter_fe) return;
  const Eigen::Index n = M.rows();
  std::map<std::string, std::vector<Eigen::Index>> by_bank;
  std::map<int, std::vector<Eigen::Index>> by_quarter;
  if (bank_fe)
    for (Eigen::Index i = 0; i < n; ++i) by_bank[bank[i]].push_back(i);
  if (quarter_fe)
    for (Eigen::Index i = 0; i < n; ++i) by_quarter[quarter[i]].push_back(i);

  auto sweep = [&](auto& groups) {
    double moved = 0;
    for (auto& [key, idx] : groups) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(M.cols());
      for (Eigen::Index i : idx) mean += M.row(i);
      mean /= static_cast<double>(idx.size());
      for (Eigen::Index i : idx) M.row(i) -= mean;
      moved = std::max(moved, mean.cwiseAbs().maxCoeff());
    }
    return moved;
  };
  if (bank_fe && !quarter_fe) {
    sweep(by_bank);
    return;
  }
  if (quarter_fe && !bank_fe) {
    sweep(by_quarter);
    return;
  }
  for (int it = 0; it < 200; ++it) {
    const double m1 = sweep(by_bank);
    const double m2 = sweep(by_quarter);
    if (std::max(m1, m2) < 1e-13) break;
  }
}

inline void check_collinear(const Eigen::MatrixXd& X, const std::vector<std::string>& names) {
  const Eigen::Index n = X.rows(), k = X.cols();
  for (Eigen::Index j = 0; j < k; ++j)
    if (X.col(j).norm() < 1e-9 * std::sqrt(static_cast<double>(n)))
      throw Collinear(names[j]);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-9);
  if (qr.rank() < k) {
    // Name the last pivoted (most dependent) column.
    const Eigen::Index bad = qr.colsPermutation().indices()(k - 1);
    throw Collinear(names[bad]);
  }
}

struct CoreFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  double r2_within = 0;
  std::size_t n_clusters = 0;
  Eigen::MatrixXd V;  // sandwich covariance
  bool weak_instrument = false;
  double first_stage_f = std::numeric_limits<double>::infinity();
};

// One estimation pass on assembled data (shared by the point fit and the
// bootstrap replicates). `Z` equals `X` for OLS.
inline CoreFit estimate_core(Assembled a, const RegressionSpec& spec,
                             const EvalContext& ctx, bool want_se) {
  const std::size_t k = a.names.size();
  Eigen::MatrixXd Z = a.X;
  if (!spec.instruments.empty()) {
    for (const auto& [endog, instr] : spec.instruments) {
      std::size_t j = k;
      for (std::size_t c = 0; c < k; ++c)
        if (a.names[c] == endog) j = c;
      if (j == k) throw ConfigError("iv: '" + endog + "' is not a regressor");
      for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const double v = instr.fn(ctx, a.rows[i]);
        if (!std::isfinite(v))
          throw DataError("iv: instrument '" + instr.name + "' missing on the estimation sample");
        Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      }
    }
  }

  // Demean y, X, Z jointly so the FE projection is identical for all blocks.
  Eigen::MatrixXd M(a.y.size(), 1 + 2 * k);
  M.col(0) = a.y;
  M.middleCols(1, k) = a.X;
  M.middleCols(1 + k, k) = Z;
  demean(M, a.bank, a.quarter, spec.bank_fe, spec.quarter_fe);
  const Eigen::VectorXd yd = M.col(0);
  const Eigen::MatrixXd Xd = M.middleCols(1, k);
  const Eigen::MatrixXd Zd = M.middleCols(1 + k, k);

  check_collinear(Xd, a.names);
  CoreFit f;
  if (spec.instruments.empty()) {
    f.coef = Xd.colPivHouseholderQr().solve(yd);
  } else {
    check_collinear(Zd, a.names);
    f.coef = (Zd.transpose() * Xd).partialPivLu().solve(Zd.transpose() * yd);
    // First-stage strength of each excluded instrument (homoskedastic F).
    for (const auto& [endog, instr] : spec.instruments) {
      std::size_t j = 0;
      for (std::size_t c = 0; c < k; ++c)
        if (a.names[c] == endog) j = c;
      const Eigen::VectorXd b1 = Zd.colPivHouseholderQr().solve(Xd.col(j));
      const Eigen::VectorXd r1 = Xd.col(j) - Zd * b1;
      const double dof = static_cast<double>(Xd.rows() - Zd.cols());
      const double s2 = r1.squaredNorm() / std::max(1.0, dof);
      const Eigen::MatrixXd ZtZinv = (Zd.transpose() * Zd).inverse();
      const double var_b = s2 * ZtZinv(j, j);
      const double F = b1(j) * b1(j) / var_b;
      f.first_stage_f = std::min(f.first_stage_f, F);
    }
    f.weak_instrument = f.first_stage_f < 10.0;
  }

  const Eigen::VectorXd resid = yd - Xd * f.coef;
  f.r2_within = yd.squaredNorm() > 0 ? 1.0 - resid.squaredNorm() / yd.squaredNorm() : 0.0;
  if (want_se) {
    // Cluster sandwich with the HC1-style small-sample factor; with
    // singleton clusters it reduces exactly to heteroscedasticity-robust SEs.
    const Eigen::MatrixXd ZXinv = (Zd.transpose() * Xd).inverse();
    std::map<std::string, Eigen::VectorXd> sums;
    for (Eigen::Index i = 0; i < Xd.rows(); ++i) {
      const std::string key = spec.cluster_by_bank ? a.bank[i] : std::to_string(i);
      auto [it, fresh] = sums.try_emplace(key, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k)));
      it->second += Zd.row(i).transpose() * resid(i);
    }
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (const auto& [key, s] : sums) meat += s * s.transpose();
    const double G = static_cast<double>(sums.size());
    const double nn = static_cast<double>(Xd.rows());
    const double c = G / (G - 1.0) * (nn - 1.0) / (nn - static_cast<double>(k));
    f.V = c * ZXinv * meat * ZXinv.transpose();
    f.se = f.V.diagonal().cwiseMax(0.0).cwiseSqrt();
    f.n_clusters = sums.size();
  }
  return f;
}

}  // namespace detail

inline RegressionFit fit_panel(std::span<const PanelObservation> panel,
                               const RegressionSpec& spec) {
  EvalContext ctx(panel);
  detail::Assembled a = detail::assemble(ctx, spec);
  detail::CoreFit core = detail::estimate_core(a, spec, ctx, true);

  RegressionFit fit;
  fit.names = a.names;
  fit.coef = core.coef;
  fit.se = core.se;
  fit.se_method = "cluster";
  fit.r2_within = core.r2_within;
  fit.n_obs = a.rows.size();
  fit.n_clusters = core.n_clusters;
  fit.weak_instrument = core.weak_instrument;
  fit.first_stage_f = core.first_stage_f;
  fit.dep_scale = Eigen::VectorXd::Constant(1, a.y_sd);
  fit.regressor_sd = a.x_sd;

  Eigen::MatrixXd V = core.V;

  if (spec.bootstrap) {
    // Pairs-cluster bootstrap: resample banks with replacement, refit, take
    // the SD of each coefficient across replicates. Per-replicate seeding
    // keeps every replicate reproducible in isolation.
    std::vector<std::string> banks;
    for (const auto& b : a.bank)
      if (banks.empty() || banks.back() != b) banks.push_back(b);
    std::sort(banks.begin(), banks.end());
    banks.erase(std::unique(banks.begin(), banks.end()), banks.end());
    std::map<std::string, std::vector<std::size_t>> rows_of;
    for (std::size_t i = 0; i < a.bank.size(); ++i) rows_of[a.bank[i]].push_back(i);

    const int B = spec.bootstrap->replications;
    Eigen::MatrixXd draws(B, core.coef.size());
    int accepted = 0;
    for (int b = 0; b < B; ++b) {
      stats::Rng rng = stats::Rng::derive(spec.bootstrap->seed, static_cast<std::uint64_t>(b));
      detail::Assembled rep;
      rep.names = a.names;
      std::vector<double> yv;
      std::vector<Eigen::RowVectorXd> xv;
      for (std::size_t d = 0; d < banks.size(); ++d) {
        const std::string& pick = banks[rng.index(banks.size())];
        // Resampled copies count as distinct clusters / FE groups.
        const std::string clone = pick + "#" + std::to_string(d);
        for (std::size_t i : rows_of[pick]) {
          yv.push_back(a.y(static_cast<Eigen::Index>(i)));
          xv.push_back(a.Xraw.row(static_cast<Eigen::Index>(i)));
          rep.bank.push_back(clone);
          rep.quarter.push_back(a.quarter[i]);
          rep.rows.push_back(a.rows[i]);
        }
      }
      rep.y = Eigen::Map<Eigen::VectorXd>(yv.data(), static_cast<Eigen::Index>(yv.size()));
      rep.X.resize(static_cast<Eigen::Index>(xv.size()), core.coef.size());
      for (std::size_t i = 0; i < xv.size(); ++i) rep.X.row(static_cast<Eigen::Index>(i)) = xv[i];
      rep.Xraw = rep.X;
      try {
        detail::CoreFit rf = detail::estimate_core(rep, spec, ctx, false);
        draws.row(accepted++) = rf.coef.transpose();
      } catch (const EstimationError&) {
        // Degenerate resample (e.g. collinear draw): skip it.
      }
    }
    if (accepted < 16) throw EstimationError("bootstrap: too few successful replicates");
    Eigen::MatrixXd used = draws.topRows(accepted);
    Eigen::RowVectorXd mean = used.colwise().mean();
    Eigen::VectorXd se(core.coef.size());
    Eigen::MatrixXd Vb = Eigen::MatrixXd::Zero(core.coef.size(), core.coef.size());
    for (int b = 0; b < accepted; ++b) {
      const Eigen::VectorXd d = (used.row(b) - mean).transpose();
      Vb += d * d.transpose();
    }
    Vb /= static_cast<double>(accepted - 1);
    fit.se = Vb.diagonal().cwiseSqrt();
    fit.se_method = "bootstrap";
    V = Vb;
  }

  for (const auto& [label, names] : spec.lincomb) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(fit.coef.size());
    for (const auto& nm : names) w(static_cast<Eigen::Index>(fit.column(nm))) = 1.0;
    LinCombTest t;
    t.label = label;
    t.estimate = w.dot(fit.coef);
    t.se = std::sqrt(std::max(0.0, double(w.transpose() * V * w)));
    fit.lincomb.push_back(t);
  }
  return fit;
}

inline RegressionFit fit_fe(std::span<const PanelObservation> panel,
                            const RegressionSpec& spec) {
  if (!spec.instruments.empty())
    throw ConfigError("fit_fe: spec carries instruments; use fit_iv");
  return fit_panel(panel, spec);
}

inline RegressionFit fit_iv(std::span<const PanelObservation> panel,
                            const RegressionSpec& spec) {
  if (spec.instruments.empty()) throw ConfigError("fit_iv: no instruments given");
  return fit_panel(panel, spec);
}

// ---- Z-score -------------------------------------------------------------

struct ZscoreResult {
  std::vector<double> z;          // NaN where undefined
  std::vector<double> roa;        // window-sum profit flows over TA, percent
  std::vector<double> sigma_roa;  // moving SD of roa over the window
  std::size_t zero_volatility = 0;
  std::size_t insufficient_history = 0;
};

// Z = (EQ/TA + ROA) / sigma_window(ROA), all in percent of total assets.
// ROA at t needs `window` contiguous quarters of profit flows; sigma needs
// `window` contiguous ROA values.
inline ZscoreResult zscore(std::span<const PanelObservation> panel, int window = 4) {
  if (window != 4 && window != 8 && window != 12)
    throw ConfigError("zscore: window must be 4, 8 or 12");
  EvalContext ctx(panel);
  const std::size_t n = panel.size();
  ZscoreResult res;
  res.z.assign(n, kNaN);
  res.roa.assign(n, kNaN);
  res.sigma_roa.assign(n, kNaN);

  auto profit_flow = [](const PanelObservation& o) {
    return o.interest_income + o.fee_income - o.total_costs;
  };
  for (std::size_t r = 0; r < n; ++r) {
    double flow_sum = 0;
    bool ok = true;
    for (int k = 0; k < window; ++k) {
      const PanelObservation* o = ctx.lagged(r, k);
      if (!o || !(o->total_assets > 0) || !std::isfinite(o->interest_income)) {
        ok = false;
        break;
      }
      flow_sum += profit_flow(*o);
    }
    if (ok) res.roa[r] = 100.0 * flow_sum / panel[r].total_assets;
  }
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> hist;
    bool ok = true;
    for (int k = 0; k < window; ++k) {
      const PanelObservation* o = ctx.lagged(r, k);
      if (!o) {
        ok = false;
        break;
      }
      const std::size_t idx = ctx.index.at({o->bank_id, o->quarter.index});
      if (!std::isfinite(res.roa[idx])) {
        ok = false;
        break;
      }
      hist.push_back(res.roa[idx]);
    }
    if (!ok) {
      ++res.insufficient_history;
      continue;
    }
    const double s = stats::sd(hist);
    res.sigma_roa[r] = s;
    if (!(s > 0)) {
      ++res.zero_volatility;
      continue;
    }
    res.z[r] = (panel[r].equity_ratio + res.roa[r]) / s;
  }
  return res;
}

// ---- Applied suites --------------------------------------------------------

using ScoreMap = std::map<std::pair<std::string, int>, double>;

inline ScoreMap score_map(std::span<const sfa::EfficiencyScore> scores) {
  ScoreMap m;
  for (const auto& s : scores) m[{s.bank_id, s.quarter.index}] = s.ce;
  return m;
}

// Revals-share channels: one two-way FE fit per heterogeneity dimension
// X in {ln TA, EQ/TA, LIQ/TA, growth}, all variables standardized and RHS
// centered.
inline std::vector<RegressionFit> channels_suite(std::span<const PanelObservation> panel) {
  const std::vector<ColumnExpr> het = {
      ln_total_assets(1), col("equity_ratio", 1), col("liquidity_ratio", 1),
      col("asset_growth_4q", 1)};
  ColumnExpr netfx = col("net_fx_position", 1);
  ColumnExpr fx_pos = positive_part(netfx);
  ColumnExpr fx_neg = negative_part(netfx);

  std::vector<RegressionFit> out;
  for (const auto& x : het) {
    RegressionSpec spec;
    spec.dependent = revals_share_expr();
    spec.regressors = {fx_neg, fx_pos, interact(fx_neg, x), interact(fx_pos, x)};
    for (const auto& c : het) spec.regressors.push_back(c);
    spec.bank_fe = true;
    spec.quarter_fe = true;
    spec.standardize = true;
    spec.center_regressors = true;
    out.push_back(fit_fe(panel, spec));
  }
  return out;
}

enum class SampleCut { Full, DropLargest25, DropSmallest25 };

inline std::vector<PanelObservation> apply_cut(std::span<const PanelObservation> panel,
                                               SampleCut cut) {
  if (cut == SampleCut::Full) return {panel.begin(), panel.end()};
  // Rank banks by mean total assets.
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& o : panel) {
    auto& [sum, cnt] = acc[o.bank_id];
    sum += o.total_assets;
    ++cnt;
  }
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& [b, sc] : acc) ranked.push_back({sc.first / sc.second, b});
  std::sort(ranked.begin(), ranked.end());
  const std::size_t q = ranked.size() / 4;
  std::set<std::string> dropped;
  if (cut == SampleCut::DropSmallest25)
    for (std::size_t i = 0; i < q; ++i) dropped.insert(ranked[i].second);
  else
    for (std::size_t i = ranked.size() - q; i < ranked.size(); ++i)
      dropped.insert(ranked[i].second);
  std::vector<PanelObservation> out;
  for (const auto& o : panel)
    if (!dropped.count(o.bank_id)) out.push_back(o);
  return out;
}

struct MarketStructureResult {
  std::string market;      // "corporate" or "household"
  std::string scores;      // "dropped" or "kept"
  std::string method;      // "ols" or "iv"
  SampleCut cut = SampleCut::Full;
  RegressionFit fit;
  double absolute_impact_pp = 0;  // 100 * gamma * sd(ln CE)
};

struct MarketStructureOptions {
  int bootstrap_replications = 200;
  std::uint64_t seed = 77;
  bool bootstrap = true;
};

// Efficient-structure test: ln MS on ln CE with controls and two-way FE,
// OLS and lag-instrumented IV, for both markets, both score variants and
// the three size cuts.
inline std::vector<MarketStructureResult> market_structure_suite(
    std::span<const PanelObservation> panel,
    std::span<const sfa::EfficiencyScore> scores_dropped,
    std::span<const sfa::EfficiencyScore> scores_kept,
    const MarketStructureOptions& opt = {}) {
  const ScoreMap dropped = score_map(scores_dropped);
  const ScoreMap kept = score_map(scores_kept);

  auto ln_ce = [](const std::string& nm, const ScoreMap& m, int lag = 0) {
    ColumnExpr base = joined(nm, m, lag);
    return ColumnExpr{base.name, [f = base.fn](const EvalContext& c, std::size_t r) {
                        const double v = f(c, r);
                        return v > 0 ? std::log(v) : kNaN;
                      }};
  };

  std::vector<MarketStructureResult> out;
  for (const std::string market : {"corporate", "household"}) {
    ColumnExpr dep = derived(
        "ln_ms", [market](const PanelObservation& o) {
          const double ms =
              market == "corporate" ? o.market_share_corp : o.market_share_hh;
          return ms > 0 ? std::log(ms) : kNaN;
        });
    for (const std::string sv : {"dropped", "kept"}) {
      const ScoreMap& m = sv == "dropped" ? dropped : kept;
      for (const std::string method : {"ols", "iv"}) {
        for (SampleCut cut : {SampleCut::Full, SampleCut::DropLargest25,
                              SampleCut::DropSmallest25}) {
          RegressionSpec spec;
          spec.dependent = dep;
          spec.regressors = {ln_ce("ln_ce", m), ln_total_assets(),
                             col("equity_ratio"), col("liquidity_ratio")};
          spec.bank_fe = true;
          spec.quarter_fe = true;
          if (method == "iv") spec.instruments["ln_ce"] = ln_ce("ln_ce", m, 1);
          if (opt.bootstrap)
            spec.bootstrap = BootstrapSpec{opt.bootstrap_replications, opt.seed};
          auto sub = apply_cut(panel, cut);
          MarketStructureResult r;
          r.market = market;
          r.scores = sv;
          r.method = method;
          r.cut = cut;
          r.fit = method == "iv" ? fit_iv(sub, spec) : fit_fe(sub, spec);
          const std::size_t j = r.fit.column("ln_ce");
          r.absolute_impact_pp = 100.0 * r.fit.coef(j) * r.fit.regressor_sd[j];
          out.push_back(std::move(r));
        }
      }
    }
  }
  return out;
}

struct StabilityResult {
  std::string dependent;  // zscore, equity_ratio, roa, sigma_roa, ln_npl
  std::string treatment;  // "revals" (Eq. 11) or "netfx" (Eq. 12)
  RegressionFit fit;
};

// Stability suite: five risk dependents on 4-quarter-lagged Revals-/TC with
// large-FX-share interactions (variant "revals"), or on lagged NetFX with
// the high-capital interaction (variant "netfx"). Bank FE, bank controls,
// GDP growth as the macro control, cluster-by-bank SEs.
inline std::vector<StabilityResult> stability_suite(std::span<const PanelObservation> panel,
                                                    int zscore_window = 4) {
  const ZscoreResult zs = zscore(panel, zscore_window);
  // Join precomputed per-row series by (bank, quarter).
  ScoreMap z_map, roa_map, sig_map;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    const auto key = std::make_pair(panel[i].bank_id, panel[i].quarter.index);
    if (std::isfinite(zs.z[i])) z_map[key] = zs.z[i];
    if (std::isfinite(zs.roa[i])) roa_map[key] = zs.roa[i];
    if (std::isfinite(zs.sigma_roa[i])) sig_map[key] = zs.sigma_roa[i];
  }

  // Sample-mean thresholds for the binary share variables.
  std::vector<double> fa, fl, eqr;
  for (const auto& o : panel) {
    fa.push_back(o.foreign_assets_ratio);
    fl.push_back(o.foreign_liabilities_ratio);
    eqr.push_back(o.equity_ratio);
  }
  const double fa_mean = stats::mean(fa), fl_mean = stats::mean(fl);
  const double eq_mean = stats::mean(eqr);

  auto large_fa = derived("large_fa", [fa_mean](const PanelObservation& o) {
    return o.foreign_assets_ratio > fa_mean ? 1.0 : 0.0;
  }, 4);
  auto large_fl = derived("large_fl", [fl_mean](const PanelObservation& o) {
    return o.foreign_liabilities_ratio > fl_mean ? 1.0 : 0.0;
  }, 4);
  auto high_cap = derived("high_capital", [eq_mean](const PanelObservation& o) {
    return o.equity_ratio > eq_mean ? 1.0 : 0.0;
  }, 4);
  auto revals = revals_share_expr(4);
  auto netfx = col("net_fx_position", 4);
  auto d1_ln_loans = ColumnExpr{
      "d1_ln_loans", [](const EvalContext& c, std::size_t r) {
        const PanelObservation* now = c.lagged(r, 4);
        const PanelObservation* prev = c.lagged(r, 5);
        if (!now || !prev || !(now->loans > 0) || !(prev->loans > 0)) return kNaN;
        return std::log(now->loans) - std::log(prev->loans);
      }};
  auto d1_ln_loans_sq = interact(d1_ln_loans, d1_ln_loans);

  const std::vector<ColumnExpr> controls = {
      ln_total_assets(4), d1_ln_loans, d1_ln_loans_sq, col("liquidity_ratio", 4),
      col("foreign_assets_ratio", 4), col("foreign_liabilities_ratio", 4),
      col("gdp_growth_4q", 4)};

  const std::vector<std::pair<std::string, ColumnExpr>> dependents = {
      {"zscore", joined("zscore", z_map)},
      {"equity_ratio", col("equity_ratio")},
      {"roa", joined("roa", roa_map)},
      {"sigma_roa", joined("sigma_roa", sig_map)},
      {"ln_npl", derived("ln_npl", [](const PanelObservation& o) {
         return o.npl > 0 ? std::log(o.npl) : kNaN;
       })}};

  std::vector<StabilityResult> out;
  for (const auto& [name, dep] : dependents) {
    {
      RegressionSpec spec;
      spec.dependent = dep;
      spec.regressors = {revals, interact(revals, large_fa), interact(revals, large_fl),
                         large_fa, large_fl};
      for (const auto& c : controls) spec.regressors.push_back(c);
      spec.bank_fe = true;
      spec.lincomb = {
          {"beta+gamma1", {revals.name, interact(revals, large_fa).name}},
          {"beta+gamma1+gamma2",
           {revals.name, interact(revals, large_fa).name, interact(revals, large_fl).name}}};
      out.push_back({name, "revals", fit_fe(panel, spec)});
    }
    {
      RegressionSpec spec;
      spec.dependent = dep;
      spec.regressors = {netfx, interact(netfx, high_cap), high_cap};
      for (const auto& c : controls) spec.regressors.push_back(c);
      spec.bank_fe = true;
      spec.lincomb = {{"phi+pi", {netfx.name, interact(netfx, high_cap).name}}};
      out.push_back({name, "netfx", fit_fe(panel, spec)});
    }
  }
  return out;
}

}  // namespace fxeff::reg
