#pragma once

// Synthetic banking-panel generator with fully known ground truth. Every
// estimator in the library is verified against panels produced here.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "fxeff/error.hpp"
#include "fxeff/panel.hpp"
#include "fxeff/sfa.hpp"
#include "fxeff/stats.hpp"
#include "fxeff/translog.hpp"

namespace fxeff::synth {

struct CrisisJump {
  int quarter = 0;     // 0-based offset from the first panel quarter
  double log_jump = 0; // added to the first weekly log return of that quarter
};

// Sustained depreciation episode: elevated drift and volatility over a span
// of panel quarters, so depreciation pressure and exchange-rate volatility
// move together as they do around real currency crises.
struct DepreciationEpisode {
  int first_quarter = 0;  // 0-based offsets from the first panel quarter
  int last_quarter = 0;   // inclusive
  double weekly_drift = 0.0;    // replaces the baseline drift inside the span
  double vol_multiplier = 1.0;  // scales the innovation SD inside the span
};

// Weekly GARCH(1,1) log-return process for the nominal exchange rate,
// aggregated to quarter-end levels.
struct NerProcess {
  double initial_level = 30.0;
  double weekly_drift = 0.0008;
  double omega = 0.9e-5;  // weekly variance scale
  double alpha = 0.10;
  double beta = 0.85;
  int weeks_per_quarter = 13;
  // Devaluation waves mimicking 2008/2014-style crises: quarters of elevated
  // depreciation drift and volatility moving together.
  std::vector<CrisisJump> crisis_jumps;
  std::vector<DepreciationEpisode> episodes = {
      {6, 10, 0.012, 1.8}, {18, 23, 0.013, 2.0}, {31, 35, 0.009, 1.8}};

  bool constant() const {
    return omega == 0 && alpha == 0 && beta == 0 && weekly_drift == 0 &&
           crisis_jumps.empty() && episodes.empty();
  }
};

// Per-bank FX balance-sheet structure. Shares are fractions of total assets
// and evolve as AR(1) processes reflected into [0, 1].
struct FxStructure {
  double liab_share_mean = 0.15;          // FX liabilities / TA, typical bank
  double liab_share_mean_foreign = 0.40;  // foreign-owned banks
  double asset_gap_frac = 0.15;           // mismatch as a fraction of the liab share
  double gap_dispersion = 0.05;           // cross-bank SD of that fraction
  double bank_dispersion = 0.085;         // cross-bank SD of the share means
  double ar1 = 0.90;
  double innovation_sd = 0.015;
  double positive_net_fx_fraction = 0.10; // banks with FX assets > liabilities
  // Off-balance FX component of the reported net position (swaps, forwards),
  // independent of the balance-sheet gap so the position is not an exact
  // linear combination of the two foreign-share ratios.
  double off_balance_sd = 0.008;
};

struct OwnershipMix {
  double big4 = 0.02;
  double other_state = 0.13;
  double foreign = 0.25;  // remainder is DomesticPrivate
};

struct SynthConfig {
  std::size_t n_banks = 200;
  std::size_t n_quarters = 40;
  Quarter first_quarter = Quarter::from(2010, 1);

  FrontierSpec frontier_spec;
  Eigen::VectorXd beta;   // [intercept, design terms...]; empty = default
  sfa::InefficiencySpec ineff_spec;
  Eigen::VectorXd delta;  // aligned to ineff_spec columns; empty = default
  double sigma_u = 0.40;
  double sigma_v = 0.10;

  NerProcess ner;
  FxStructure fx;
  OwnershipMix ownership_mix;

  double gamma_market = 0.5;      // ln MS loading on ln CE in the DGP
  double stability_beta = -0.8;   // profit response to lagged Revals-/TC
  double stability_gamma1 = 0.8;  // offset for large-foreign-share banks

  std::uint64_t seed = 42;

  void validate() const {
    if (n_banks == 0 || n_quarters == 0)
      throw ConfigError("synth: n_banks and n_quarters must be positive");
    if (!(sigma_u > 0) || !(sigma_v > 0))
      throw ConfigError("synth: sigma_u and sigma_v must be positive");
    if (ner.omega < 0 || ner.alpha < 0 || ner.beta < 0 || ner.alpha + ner.beta >= 1.0)
      throw ConfigError("synth: NER GARCH parameters invalid");
    if (!(ner.initial_level > 0)) throw ConfigError("synth: initial NER level <= 0");
    if (ner.weeks_per_quarter < 1) throw ConfigError("synth: weeks_per_quarter < 1");
    auto share_ok = [](double s) { return s >= 0.0 && s <= 1.0; };
    if (!share_ok(fx.liab_share_mean) || !share_ok(fx.liab_share_mean_foreign) ||
        !share_ok(fx.positive_net_fx_fraction))
      throw ConfigError("synth: FX shares must lie in [0, 1]");
    const double mix = ownership_mix.big4 + ownership_mix.other_state + ownership_mix.foreign;
    if (ownership_mix.big4 < 0 || ownership_mix.other_state < 0 ||
        ownership_mix.foreign < 0 || mix > 1.0)
      throw ConfigError("synth: ownership mix probabilities invalid");
    frontier_spec.validate();
  }
};

struct GroundTruth {
  // Row-aligned with the generated panel.
  std::vector<double> true_u;
  std::vector<double> true_ce;      // exp(-u)
  std::vector<double> revals_neg;
  std::vector<double> revals_pos;
  std::vector<double> true_caoc;

  Eigen::VectorXd beta;             // [intercept, design terms...]
  std::vector<std::string> beta_names;
  Eigen::VectorXd delta;
  std::vector<std::string> delta_names;
  double sigma_u = 0, sigma_v = 0;
  double gamma_market = 0;
  double stability_beta = 0, stability_gamma1 = 0;

  // Quarter-end NER levels; index 0 is `pre_quarters` before the panel start.
  std::vector<double> ner_levels;
  // Week-end levels over the same span (weeks_per_quarter per quarter), for
  // re-estimating exchange-rate volatility downstream.
  std::vector<double> ner_weekly;
  std::size_t pre_quarters = 0;
  Quarter first_quarter;
};

namespace detail {

// Revaluation flows for one bank-quarter under the new-value-minus-old-value
// mechanics; fxl/fxa are ruble values of FX liabilities/assets at ner_prev.
inline std::pair<double, double> revals_flows(double fxl, double fxa, double ner_prev,
                                              double ner_now) {
  const double d = ner_now - ner_prev;
  const double up = std::max(d, 0.0) / ner_prev;
  const double dn = std::max(-d, 0.0) / ner_prev;
  return {fxl * up + fxa * dn,   // Revals-
          fxa * up + fxl * dn};  // Revals+
}

inline double reflect01(double x) {
  while (x < 0.0 || x > 1.0) x = x < 0.0 ? -x : 2.0 - x;
  return x;
}

// Default true frontier coefficients for the default FrontierSpec (intercept
// first, then the 21 design terms: 4 log-linear, 4 half-squares, 6 crosses,
// 5 risk ratios, trend, trend^2).
inline Eigen::VectorXd default_beta(const DesignMatrix& d) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(1 + d.cols());
  b(0) = 3.0;  // intercept; level calibrated below via the cost scale
  for (std::size_t c = 0; c < d.terms.size(); ++c) {
    const Term& t = d.terms[c];
    const std::size_t j = 1 + c;
    switch (t.kind) {
      case TermKind::LogLinear:
        b(j) = (t.a == 0 ? 0.45 : t.a == 1 ? 0.25 : t.a == 2 ? 0.08 : 0.35);
        break;
      case TermKind::HalfSquare:
        b(j) = (t.a == 0 ? 0.008 : t.a == 1 ? 0.006 : t.a == 2 ? 0.002 : 0.02);
        break;
      case TermKind::Cross:
        b(j) = ((t.a + t.b) % 2 == 0 ? 0.002 : -0.002);
        break;
      case TermKind::Linear: {
        if (t.name == "equity_ratio") b(j) = -0.004;
        else if (t.name == "liquidity_ratio") b(j) = -0.002;
        else if (t.name == "lt_loans_firms_ratio") b(j) = 0.003;
        else if (t.name == "lt_loans_hh_ratio") b(j) = 0.002;
        else b(j) = 0.0005;
        break;
      }
      case TermKind::Trend: b(j) = -0.05; break;
      case TermKind::TrendSq: b(j) = 0.02; break;
    }
  }
  return b;
}

inline Eigen::VectorXd default_delta(const sfa::InefficiencySpec& spec) {
  const auto names = spec.column_names();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    const std::string& n = names[j];
    if (n == "z_const") d(j) = 0.20;
    else if (n == "z_big4") d(j) = 0.05;
    else if (n == "z_other_state") d(j) = 0.10;
    else if (n == "z_foreign") d(j) = -0.10;
    else if (n == "z_bailout") d(j) = 0.10;
    else if (n == "z_tight_regulation") d(j) = 0.05;
    else if (n == "z_liquidity_ratio") d(j) = -0.002;
    else if (n == "z_lt_loans_firms_ratio") d(j) = 0.003;
    else if (n == "z_lt_loans_hh_ratio") d(j) = 0.002;
    else if (n == "z_asset_growth_4q") d(j) = 0.001;
    else if (n == "z_equity_ratio") d(j) = -0.002;
  }
  return d;
}

}  // namespace detail

// Quarter-end NER levels, `pre` quarters before the panel plus n quarters in
// it. Crisis jumps land on the first week of their panel quarter.
inline std::vector<double> simulate_ner(const NerProcess& p, std::size_t n, std::size_t pre,
                                        stats::Rng& rng,
                                        std::vector<double>* weekly = nullptr) {
  const std::size_t total = pre + n;
  std::vector<double> levels(total);
  if (weekly) weekly->reserve(total * p.weeks_per_quarter);
  double log_level = std::log(p.initial_level);
  const double h_uncond =
      p.alpha + p.beta < 1.0 && p.omega > 0 ? p.omega / (1.0 - p.alpha - p.beta) : p.omega;
  double h = h_uncond;
  double prev_r = 0.0;
  for (std::size_t q = 0; q < total; ++q) {
    const DepreciationEpisode* ep = nullptr;
    if (q >= pre)
      for (const auto& e : p.episodes)
        if (static_cast<int>(q - pre) >= e.first_quarter &&
            static_cast<int>(q - pre) <= e.last_quarter)
          ep = &e;
    for (int w = 0; w < p.weeks_per_quarter; ++w) {
      h = q == 0 && w == 0 ? h_uncond
                           : p.omega + p.alpha * prev_r * prev_r + p.beta * h;
      // The episode multiplier scales the innovation exogenously and stays
      // out of the variance recursion so the base process remains stationary.
      const double base_shock = std::sqrt(std::max(0.0, h)) * rng.normal();
      const double shock = (ep ? ep->vol_multiplier : 1.0) * base_shock;
      double r = (ep ? ep->weekly_drift : p.weekly_drift) + shock;
      // Jumps shift the level without feeding the variance recursion, so a
      // crisis does not detonate weeks of follow-on volatility.
      if (w == 0 && q >= pre)
        for (const auto& j : p.crisis_jumps)
          if (j.quarter == static_cast<int>(q - pre)) r += j.log_jump;
      prev_r = base_shock;
      log_level += r;
      if (weekly) weekly->push_back(std::exp(log_level));
    }
    levels[q] = std::exp(log_level);
  }
  return levels;
}

inline std::pair<std::vector<PanelObservation>, GroundTruth> generate(
    const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t nb = cfg.n_banks, nq = cfg.n_quarters;
  const std::size_t pre = 5;  // NER history for deltas and lag regressors

  stats::Rng rng_ner = stats::Rng::derive(cfg.seed, 0);
  stats::Rng rng_bank = stats::Rng::derive(cfg.seed, 1);
  stats::Rng rng_path = stats::Rng::derive(cfg.seed, 2);
  stats::Rng rng_err = stats::Rng::derive(cfg.seed, 3);
  stats::Rng rng_mkt = stats::Rng::derive(cfg.seed, 4);
  stats::Rng rng_nfx = stats::Rng::derive(cfg.seed, 5);

  GroundTruth gt;
  gt.ner_levels = simulate_ner(cfg.ner, nq, pre, rng_ner, &gt.ner_weekly);
  gt.pre_quarters = pre;
  gt.first_quarter = cfg.first_quarter;

  // Crisis windows (quarter offsets) for the macro series.
  auto in_crisis = [&](std::size_t t) {
    for (const auto& j : cfg.ner.crisis_jumps)
      if (static_cast<int>(t) >= j.quarter && static_cast<int>(t) <= j.quarter + 1)
        return true;
    for (const auto& e : cfg.ner.episodes)
      if (static_cast<int>(t) >= e.first_quarter &&
          static_cast<int>(t) <= e.last_quarter)
        return true;
    return false;
  };

  // ---- Per-bank static structure ----
  struct Bank {
    Ownership own;
    double ln_ta0, ta_drift;
    double loans_share, dep_share, fee_share;
    double fxl_mean, fxa_mean, fxloan_mean;
    double eq_mean, liq_mean, ltf_mean, lth_mean;
    double wage_level, cap_level, dep_rate;
    bool bailout, tight, large_foreign;
    double ms_fe_corp, ms_fe_hh;
  };
  std::vector<Bank> banks(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    Bank& b = banks[i];
    const double u = rng_bank.uniform();
    if (u < cfg.ownership_mix.big4) b.own = Ownership::Big4;
    else if (u < cfg.ownership_mix.big4 + cfg.ownership_mix.other_state)
      b.own = Ownership::OtherState;
    else if (u < cfg.ownership_mix.big4 + cfg.ownership_mix.other_state +
                     cfg.ownership_mix.foreign)
      b.own = Ownership::Foreign;
    else b.own = Ownership::DomesticPrivate;

    b.ln_ta0 = rng_bank.normal(std::log(5e4), 1.0) + (b.own == Ownership::Big4 ? 3.0 : 0.0);
    b.ta_drift = rng_bank.normal(0.015, 0.008);
    b.loans_share = std::clamp(rng_bank.normal(0.55, 0.05), 0.30, 0.80);
    b.dep_share = std::clamp(rng_bank.normal(0.60, 0.05), 0.35, 0.85);
    b.fee_share = std::max(0.002, rng_bank.normal(0.006, 0.0015));

    const double base = b.own == Ownership::Foreign ? cfg.fx.liab_share_mean_foreign
                                                    : cfg.fx.liab_share_mean;
    b.fxl_mean = std::clamp(base + rng_bank.normal(0.0, cfg.fx.bank_dispersion), 0.02, 0.90);
    const bool positive_net = rng_bank.uniform() < cfg.fx.positive_net_fx_fraction;
    const double gap = std::clamp(
        rng_bank.normal(cfg.fx.asset_gap_frac, cfg.fx.gap_dispersion), 0.05, 0.8);
    b.fxa_mean = std::clamp(b.fxl_mean * (1.0 + (positive_net ? gap : -gap)), 0.01, 0.95);
    b.fxloan_mean = std::clamp(0.8 * b.fxl_mean, 0.01, 0.90);

    b.eq_mean = std::clamp(rng_bank.normal(13.0, 4.0), 5.0, 30.0);
    b.liq_mean = std::clamp(rng_bank.normal(22.0, 5.0), 8.0, 45.0);
    b.ltf_mean = std::clamp(rng_bank.normal(10.0, 4.0), 1.0, 30.0);
    b.lth_mean = std::clamp(rng_bank.normal(8.0, 3.0), 1.0, 25.0);
    b.wage_level = 0.010 * std::exp(rng_bank.normal(0.0, 0.12));
    b.cap_level = 0.030 * std::exp(rng_bank.normal(0.0, 0.12));
    b.dep_rate = 0.011 * std::exp(rng_bank.normal(0.0, 0.10));
    b.bailout = rng_bank.uniform() < 0.10;
    b.tight = rng_bank.uniform() < 0.20;
    b.large_foreign = b.fxa_mean > 0.35;
    b.ms_fe_corp = rng_bank.normal(0.0, 0.3);
    b.ms_fe_hh = rng_bank.normal(0.0, 0.3);
  }

  // ---- Per-bank-quarter paths and non-cost fields ----
  std::vector<PanelObservation> panel;
  panel.reserve(nb * nq);
  std::vector<double> fxl_ta, fxa_ta;  // ruble FX positions, row-aligned
  fxl_ta.reserve(nb * nq);
  fxa_ta.reserve(nb * nq);
  for (std::size_t i = 0; i < nb; ++i) {
    const Bank& b = banks[i];
    // TA path with a 4-quarter lead-in for the growth variable.
    std::vector<double> ln_ta(nq + 4);
    ln_ta[0] = b.ln_ta0;
    for (std::size_t t = 1; t < ln_ta.size(); ++t)
      ln_ta[t] = ln_ta[t - 1] + b.ta_drift + 0.02 * rng_path.normal();

    double fxl = b.fxl_mean, fxa = b.fxa_mean, fxloan = b.fxloan_mean;
    double eq = b.eq_mean, liq = b.liq_mean, ltf = b.ltf_mean, lth = b.lth_mean;
    for (std::size_t t = 0; t < nq; ++t) {
      // Innovation scaled by the variable's range so percent-scale ratios
      // get genuine within-bank variation, not the share-scale 1.5pp.
      auto step = [&](double x, double mean, double lo, double hi) {
        const double y = mean + cfg.fx.ar1 * (x - mean) +
                         cfg.fx.innovation_sd * (hi - lo) * rng_path.normal();
        return lo + (hi - lo) * detail::reflect01((y - lo) / (hi - lo));
      };
      fxl = step(fxl, b.fxl_mean, 0.0, 1.0);
      fxa = step(fxa, b.fxa_mean, 0.0, 1.0);
      fxloan = step(fxloan, b.fxloan_mean, 0.0, 1.0);
      eq = step(eq, b.eq_mean, 2.0, 40.0);
      liq = step(liq, b.liq_mean, 2.0, 60.0);
      ltf = step(ltf, b.ltf_mean, 0.5, 40.0);
      lth = step(lth, b.lth_mean, 0.5, 35.0);

      PanelObservation o;
      o.bank_id = "B" + std::string(4 - std::min<std::size_t>(4, std::to_string(i).size()), '0') +
                  std::to_string(i);
      o.quarter = Quarter{cfg.first_quarter.index + static_cast<int>(t)};
      o.ownership = b.own;
      o.bailout = b.bailout;
      o.tight_regulation = b.tight && t >= (3 * nq) / 5;

      const double ta = std::exp(ln_ta[t + 4]);
      o.total_assets = ta;
      o.loans = b.loans_share * ta;
      o.deposits = b.dep_share * ta;
      o.fee_income = b.fee_share * ta * std::exp(0.1 * rng_path.normal());
      o.fx_loans = fxloan * o.loans;
      o.rub_loans = o.loans - o.fx_loans;
      o.wage_rate = b.wage_level * std::exp(0.08 * rng_path.normal());
      o.capital_rate = b.cap_level * std::exp(0.08 * rng_path.normal());
      o.equity_ratio = eq;
      o.liquidity_ratio = liq;
      o.lt_loans_firms_ratio = ltf;
      o.lt_loans_hh_ratio = lth;
      o.asset_growth_4q = 100.0 * (ln_ta[t + 4] - ln_ta[t]);
      o.foreign_assets_ratio = 100.0 * fxa;
      o.foreign_liabilities_ratio = 100.0 * fxl;
      o.net_fx_position = fxa - fxl + cfg.fx.off_balance_sd * rng_nfx.normal();
      o.npl = 0.04 * ta * std::exp(0.4 * rng_path.normal());
      o.gdp_growth_4q = 2.0 + 1.5 * std::sin(2.0 * M_PI * t / 16.0) -
                        (in_crisis(t) ? 6.0 : 0.0);
      // placeholder positive costs so the design builder can run
      o.total_costs = 1.0;
      o.interest_expenses = 0.0;
      o.revals_neg = 0.0;
      o.revals_pos = 0.0;
      panel.push_back(std::move(o));
      fxl_ta.push_back(fxl * ta);
      fxa_ta.push_back(fxa * ta);
    }
  }

  // ---- True frontier and costs ----
  const DesignMatrix d = build_design(panel, cfg.frontier_spec, CostChoice::OC);
  Eigen::VectorXd beta = cfg.beta.size() ? cfg.beta : detail::default_beta(d);
  if (static_cast<std::size_t>(beta.size()) != 1 + d.cols())
    throw ConfigError("synth: beta length does not match the frontier design");
  const auto z_names = cfg.ineff_spec.column_names();
  Eigen::VectorXd delta = cfg.delta.size() ? cfg.delta : detail::default_delta(cfg.ineff_spec);
  if (static_cast<std::size_t>(delta.size()) != z_names.size())
    throw ConfigError("synth: delta length does not match the inefficiency spec");
  const Eigen::MatrixXd Z = sfa::build_z(panel, cfg.ineff_spec);

  gt.beta = beta;
  gt.beta_names.push_back("const");
  for (const auto& t : d.terms) gt.beta_names.push_back(t.name);
  gt.delta = delta;
  gt.delta_names = z_names;
  gt.sigma_u = cfg.sigma_u;
  gt.sigma_v = cfg.sigma_v;
  gt.gamma_market = cfg.gamma_market;
  gt.stability_beta = cfg.stability_beta;
  gt.stability_gamma1 = cfg.stability_gamma1;

  const std::size_t n = panel.size();
  gt.true_u.resize(n);
  gt.true_ce.resize(n);
  gt.revals_neg.resize(n);
  gt.revals_pos.resize(n);
  gt.true_caoc.resize(n);
  std::vector<double> revals_share(n);  // Revals-/TC for the stability channel
  for (std::size_t r = 0; r < n; ++r) {
    PanelObservation& o = panel[r];
    const double mu = Z.row(r).dot(delta);
    const double u = rng_err.truncated_normal_pos(mu, cfg.sigma_u);
    const double v = rng_err.normal(0.0, cfg.sigma_v);
    gt.true_u[r] = u;
    gt.true_ce[r] = std::exp(-u);

    const double xb = beta(0) + d.X.row(r).dot(beta.tail(d.cols()));
    const double w_norm = o.capital_rate;  // default normalization price
    const double caoc = w_norm * std::exp(xb + u + v);
    const std::size_t t = r % nq;
    const double ner_prev = gt.ner_levels[pre + t - 1];
    const double ner_now = gt.ner_levels[pre + t];
    auto [rn, rp] = detail::revals_flows(fxl_ta[r], fxa_ta[r], ner_prev, ner_now);
    const double ie = banks[r / nq].dep_rate * o.deposits;
    o.interest_expenses = ie;
    o.revals_neg = rn;
    o.revals_pos = rp;
    o.total_costs = caoc + ie + rn;
    gt.true_caoc[r] = caoc;
    gt.revals_neg[r] = rn;
    gt.revals_pos[r] = rp;
    revals_share[r] = rn / o.total_costs;
  }

  // ---- Profit flows (stability channel) and market shares ----
  for (std::size_t r = 0; r < n; ++r) {
    PanelObservation& o = panel[r];
    const std::size_t i = r / nq, t = r % nq;
    double effect = 0.0;
    if (t >= 4) {
      const double lag_share = revals_share[r - 4];
      effect = (cfg.stability_beta +
                cfg.stability_gamma1 * (banks[i].large_foreign ? 1.0 : 0.0)) *
               lag_share * 0.01;
    }
    const double profit = o.total_assets *
                          (0.004 + effect + 0.002 * rng_mkt.normal());
    o.interest_income = o.total_costs - o.fee_income + profit;
  }
  // Market shares: softmax over banks within each quarter, loading on true CE.
  for (std::size_t t = 0; t < nq; ++t) {
    std::vector<double> raw_c(nb), raw_h(nb);
    double sum_c = 0, sum_h = 0;
    for (std::size_t i = 0; i < nb; ++i) {
      const std::size_t r = i * nq + t;
      const double lce = std::log(gt.true_ce[r]);
      raw_c[i] = std::exp(std::log(panel[r].total_assets) + banks[i].ms_fe_corp +
                          cfg.gamma_market * lce + 0.10 * rng_mkt.normal());
      raw_h[i] = std::exp(std::log(panel[r].total_assets) + banks[i].ms_fe_hh +
                          cfg.gamma_market * lce + 0.10 * rng_mkt.normal());
      sum_c += raw_c[i];
      sum_h += raw_h[i];
    }
    for (std::size_t i = 0; i < nb; ++i) {
      panel[i * nq + t].market_share_corp = raw_c[i] / sum_c;
      panel[i * nq + t].market_share_hh = raw_h[i] / sum_h;
    }
  }

  return {std::move(panel), std::move(gt)};
}

// ---- Summary (Table-2-shaped components plus quarterly percentile bands) ----

struct ComponentStats {
  std::string name;
  double mean = 0, sd = 0, min = 0, max = 0;
};

struct QuarterBand {
  Quarter quarter;
  double p5 = 0, p25 = 0, p50 = 0, p75 = 0, p95 = 0;
};

struct PanelSummary {
  std::vector<ComponentStats> components;
  std::vector<QuarterBand> revals_share;        // Revals-/TC
  std::vector<QuarterBand> delta_revals_share;  // (Revals+ - Revals-)/TC
};

inline PanelSummary describe(std::span<const PanelObservation> panel) {
  if (panel.empty()) throw EmptyPanel();
  PanelSummary s;
  auto add = [&](const std::string& name, auto getter) {
    std::vector<double> v;
    v.reserve(panel.size());
    for (const auto& o : panel) v.push_back(getter(o));
    ComponentStats c{name, stats::mean(v), stats::sd(v),
                     *std::min_element(v.begin(), v.end()),
                     *std::max_element(v.begin(), v.end())};
    s.components.push_back(c);
  };
  add("total_costs", [](const PanelObservation& o) { return o.total_costs; });
  add("interest_expenses", [](const PanelObservation& o) { return o.interest_expenses; });
  add("revals_neg", [](const PanelObservation& o) { return o.revals_neg; });
  add("revals_pos", [](const PanelObservation& o) { return o.revals_pos; });
  add("operating_costs",
      [](const PanelObservation& o) { return derive_cost_measures(o).oc; });
  add("currency_adjusted_operating_costs",
      [](const PanelObservation& o) { return derive_cost_measures(o).caoc; });
  add("interest_income", [](const PanelObservation& o) { return o.interest_income; });

  std::map<int, std::vector<double>> by_q_share, by_q_delta;
  for (const auto& o : panel) {
    const auto m = derive_cost_measures(o);
    by_q_share[o.quarter.index].push_back(m.revals_share);
    by_q_delta[o.quarter.index].push_back(m.delta_revals_share);
  }
  auto bands = [](std::map<int, std::vector<double>>& by_q) {
    std::vector<QuarterBand> out;
    for (auto& [q, v] : by_q) {
      std::sort(v.begin(), v.end());
      out.push_back({Quarter{q}, stats::percentile_sorted(v, 0.05),
                     stats::percentile_sorted(v, 0.25), stats::percentile_sorted(v, 0.50),
                     stats::percentile_sorted(v, 0.75), stats::percentile_sorted(v, 0.95)});
    }
    return out;
  };
  s.revals_share = bands(by_q_share);
  s.delta_revals_share = bands(by_q_delta);
  return s;
}

}  // namespace fxeff::synth
