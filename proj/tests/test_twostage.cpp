#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fxeff/synth.hpp"
#include "fxeff/twostage.hpp"

using namespace fxeff;

namespace {

// Quarter-end NER levels with irregular time variation (a smooth series
// would make its own lags collinear with the trend controls), starting
// `pre` quarters before panel quarter 0.
twostage::NerSeries make_ner(int n_quarters, int pre) {
  twostage::NerSeries ner;
  ner.first = Quarter{-pre};
  stats::Rng rng = stats::Rng::derive(314, 1);
  double ln_level = std::log(30.0);
  for (int q = 0; q < n_quarters + pre; ++q) {
    ner.levels.push_back(std::exp(ln_level));
    ln_level += 0.01 + 0.06 * rng.normal();
  }
  return ner;
}

// Panel for stage-1 tests: ln OC = bank FE + beta * ln NER_t + 0.3 ln TA + noise.
std::vector<PanelObservation> make_cost_panel(std::size_t n_banks, int n_quarters,
                                              const twostage::NerSeries& ner,
                                              double beta, std::uint64_t seed) {
  stats::Rng rng = stats::Rng::derive(seed, 3);
  std::vector<PanelObservation> panel;
  for (std::size_t b = 0; b < n_banks; ++b) {
    const double fe = rng.normal(0.0, 0.5);
    const double ta = std::exp(6.0 + rng.normal(0.0, 0.8));
    for (int t = 0; t < n_quarters; ++t) {
      PanelObservation o;
      o.bank_id = "B" + std::to_string(100 + b);
      o.quarter = Quarter{t};
      o.total_assets = ta * std::exp(rng.normal(0.0, 0.05));
      const double ln_oc = fe + beta * ner.log_level(t) +
                           0.3 * std::log(o.total_assets) + rng.normal(0.0, 0.05);
      o.interest_expenses = 1.0;
      o.total_costs = std::exp(ln_oc) + o.interest_expenses;
      panel.push_back(std::move(o));
    }
  }
  return panel;
}

twostage::TwoStageConfig log_level_cfg(int lags = 0) {
  twostage::TwoStageConfig cfg;
  cfg.regressor = twostage::NerRegressor::LogLevel;
  cfg.lags = lags;
  return cfg;
}

}  // namespace

TEST_CASE("stage one recovers the pass-through coefficient") {
  const auto ner = make_ner(24, 5);
  const auto panel = make_cost_panel(40, 24, ner, 1.4, 2024);
  const auto cfg = log_level_cfg(0);
  const auto s1 = twostage::stage_one(panel, ner, cfg);
  REQUIRE(s1.beta.size() == 1);
  CHECK(s1.se[0] > 0);
  CHECK(std::fabs(s1.beta[0] - 1.4) < 3.0 * s1.se[0]);
  CHECK(s1.r2_within > 0.8);
  // ln TA control recovered as well.
  const std::size_t j = s1.fit.column("ln_ta");
  CHECK(std::fabs(s1.fit.coef(static_cast<Eigen::Index>(j)) - 0.3) <
        3.0 * s1.fit.se(static_cast<Eigen::Index>(j)));
}

TEST_CASE("stage-one purge inverts exactly and keeps the bank effects") {
  const auto ner = make_ner(20, 5);
  const auto panel = make_cost_panel(20, 20, ner, 0.9, 7);
  const auto cfg = log_level_cfg(2);
  const auto s1 = twostage::stage_one(panel, ner, cfg);
  REQUIRE(s1.purged_log_costs.size() == panel.size());
  REQUIRE(s1.ner_part.size() == panel.size());
  for (std::size_t i = 0; i < panel.size(); ++i) {
    const double oc = cost_of(panel[i], CostChoice::OC);
    REQUIRE(oc > 0);
    CHECK(std::fabs(s1.purged_log_costs[i] + s1.ner_part[i] - std::log(oc)) < 1e-12);
  }
  // ner_part is a pure time series: identical across banks in a quarter.
  std::map<int, double> by_q;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    auto [it, fresh] = by_q.try_emplace(panel[i].quarter.index, s1.ner_part[i]);
    CHECK(s1.ner_part[i] == it->second);
  }
  CHECK(s1.bank_fe.size() == 20);
}

TEST_CASE("constant NER is rejected as collinear in stage one") {
  twostage::NerSeries ner;
  ner.first = Quarter{-5};
  ner.levels.assign(25, 30.0);
  const auto panel = make_cost_panel(15, 20, ner, 0.0, 5);
  CHECK_THROWS_AS(twostage::stage_one(panel, ner, log_level_cfg(0)), Collinear);
}

TEST_CASE("NER series must cover the lag window") {
  twostage::NerSeries ner = make_ner(20, 0);  // starts exactly at quarter 0
  const auto panel = make_cost_panel(10, 20, ner, 0.5, 9);
  CHECK_THROWS_AS(twostage::stage_one(panel, ner, log_level_cfg(2)), InsufficientLags);
  CHECK_NOTHROW(twostage::stage_one(panel, ner, log_level_cfg(0)));
}

TEST_CASE("two-stage config validation") {
  twostage::TwoStageConfig cfg;
  cfg.lags = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.lags = 2;
  cfg.fx_offset = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.fx_offset = 1.0;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("regressor series: log level is exact, volatility needs weekly data") {
  const auto ner = make_ner(12, 2);
  const auto s = twostage::regressor_series(ner, twostage::NerRegressor::LogLevel);
  REQUIRE(s.size() == ner.levels.size());
  for (std::size_t q = 0; q < s.size(); ++q)
    CHECK(s[q] == std::log(ner.levels[q]));
  CHECK_THROWS_AS(
      twostage::regressor_series(ner, twostage::NerRegressor::GarchVolatility),
      DataError);
}

TEST_CASE("counterfactual variants on a synthetic panel") {
  synth::SynthConfig scfg;
  scfg.n_banks = 80;
  scfg.n_quarters = 28;
  scfg.seed = 7;
  auto [panel, gt] = synth::generate(scfg);

  twostage::NerSeries ner;
  ner.first = Quarter{gt.first_quarter.index - static_cast<int>(gt.pre_quarters)};
  ner.levels = gt.ner_levels;
  ner.weekly = gt.ner_weekly;
  ner.weeks_per_quarter = scfg.ner.weeks_per_quarter;

  twostage::TwoStageConfig cfg;
  cfg.frontier = scfg.frontier_spec;
  cfg.ineff = scfg.ineff_spec;
  cfg.fit.starts = 3;

  SUBCASE("both stages: converged fit with scores in (0, 1]") {
    const auto res = twostage::run_variant(panel, ner, cfg);
    REQUIRE(res.stage1.has_value());
    CHECK(res.stage2.fit.converged);
    CHECK(res.stage2.scores.size() == res.stage2.n_obs);
    CHECK(res.stage2.n_obs == filter_positive_cost(panel, CostChoice::OC).size());
    for (const auto& s : res.stage2.scores) {
      CHECK(s.ce > 0);
      CHECK(s.ce <= 1.0);
      CHECK(s.u_hat >= 0);
    }
  }

  SUBCASE("second-only variant runs without a first stage") {
    auto c = cfg;
    c.variant = twostage::Variant::SecondOnly;
    const auto res = twostage::run_variant(panel, ner, c);
    CHECK(!res.stage1.has_value());
    CHECK(res.stage2.fit.converged);
  }

  SUBCASE("zero FX exposure reduces the augmented model to the plain one") {
    auto zero = panel;
    for (auto& o : zero) {
      o.rub_loans += o.fx_loans;
      o.fx_loans = 0.0;
      o.foreign_assets_ratio = 0.0;
      o.net_fx_position = 0.0;
    }
    const auto s2 = twostage::stage_two(zero, ner, cfg, {}, true, false);
    CHECK(s2.fit.converged);
    auto dropped_has = [&](const std::string& nm) {
      for (const auto& d : s2.dropped_terms)
        if (d == nm) return true;
      return false;
    };
    // ln(0 + offset) = 0 and fx/TA = 0: the bank-specific FX columns vanish.
    CHECK(dropped_has("z_fx_loans_ta"));
    CHECK(dropped_has("z_fx_loans_ta_x_d4_ln_ner"));
    for (const auto& nm : s2.fit.names) CHECK(nm != "z_fx_loans_ta");

    auto c = cfg;
    c.zero_fx = twostage::ZeroFxPolicy::Drop;
    CHECK_THROWS_AS(twostage::stage_two(zero, ner, c, {}, true, false), EmptyPanel);
  }
}

TEST_CASE("zero revaluations: every estimator variant agrees") {
  synth::SynthConfig scfg;
  scfg.n_banks = 60;
  scfg.n_quarters = 24;
  scfg.seed = 9;
  auto [panel, gt] = synth::generate(scfg);
  // Strip the revaluation flows while preserving the cost identity, so the
  // kept and dropped cost measures coincide and no correction is needed.
  for (auto& o : panel) {
    o.total_costs -= o.revals_neg;
    o.revals_neg = 0.0;
    o.revals_pos = 0.0;
  }

  twostage::NerSeries ner;
  ner.first = Quarter{gt.first_quarter.index - static_cast<int>(gt.pre_quarters)};
  ner.levels = gt.ner_levels;
  ner.weekly = gt.ner_weekly;
  ner.weeks_per_quarter = scfg.ner.weeks_per_quarter;

  twostage::TwoStageConfig cfg;
  cfg.frontier = scfg.frontier_spec;
  cfg.ineff = scfg.ineff_spec;
  cfg.fit.starts = 2;

  const auto table = twostage::comparison_table(panel, ner, cfg);
  REQUIRE(table.size() == 6);
  CHECK(table.front().label == "kept");
  CHECK(table.back().label == "dropped");
  // Identical cost measures: the two plain fits are the same computation.
  CHECK(table.front().mean == table.back().mean);
  for (const auto& r : table) {
    CHECK(r.n == table.front().n);
    CHECK(r.mean > 0);
    CHECK(r.mean <= 1.0);
    // No distortion to correct: every variant stays within 2pp of the plain fit.
    CHECK(std::fabs(r.mean - table.front().mean) < 0.02);
  }
}
