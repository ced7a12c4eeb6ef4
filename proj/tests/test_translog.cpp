#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "fxeff/stats.hpp"
#include "fxeff/translog.hpp"
#include "oracles.hpp"

using namespace fxeff;

namespace {

PanelObservation obs_with(double loans, double deposits, double fee, double w1,
                          double w2, int q = 0) {
  PanelObservation o;
  o.bank_id = "A";
  o.quarter = Quarter{q};
  o.total_costs = 120;
  o.interest_expenses = 20;
  o.revals_neg = 10;
  o.loans = loans;
  o.fx_loans = 0.3 * loans;
  o.rub_loans = 0.7 * loans;
  o.deposits = deposits;
  o.fee_income = fee;
  o.wage_rate = w1;
  o.capital_rate = w2;
  o.total_assets = 1000;
  o.equity_ratio = 12;
  o.liquidity_ratio = 20;
  o.lt_loans_firms_ratio = 5;
  o.lt_loans_hh_ratio = 7;
  o.asset_growth_4q = 3;
  return o;
}

}  // namespace

TEST_CASE("single-output design has the 5 expected regressors") {
  FrontierSpec spec;
  spec.outputs = {"loans"};
  spec.risk_covariates = {};
  spec.trend_degree = 0;
  std::vector<PanelObservation> panel = {obs_with(50, 40, 2, 0.04, 0.2)};
  auto d = build_design(panel, spec, CostChoice::OC);
  REQUIRE(d.cols() == 5);
  const double ly = std::log(50.0);
  const double lw = std::log(0.04 / 0.2);
  CHECK(d.X(0, 0) == doctest::Approx(ly));
  CHECK(d.X(0, 1) == doctest::Approx(lw));
  CHECK(d.X(0, 2) == doctest::Approx(0.5 * ly * ly));
  CHECK(d.X(0, 3) == doctest::Approx(0.5 * lw * lw));
  CHECK(d.X(0, 4) == doctest::Approx(ly * lw));
  CHECK(d.y(0) == doctest::Approx(std::log(100.0 / 0.2)));
}

TEST_CASE("all prices equal to the normalization price zero out price terms") {
  FrontierSpec spec;
  spec.outputs = {"loans"};
  spec.risk_covariates = {};
  spec.trend_degree = 0;
  std::vector<PanelObservation> panel = {obs_with(50, 40, 2, 0.2, 0.2)};
  auto d = build_design(panel, spec, CostChoice::OC);
  CHECK(d.X(0, 1) == 0.0);  // ln(w1/w2)
  CHECK(d.X(0, 3) == 0.0);
  CHECK(d.X(0, 4) == 0.0);
}

TEST_CASE("default spec term count matches brute-force enumeration") {
  FrontierSpec spec;  // L=3, M=2, 5 risk, quadratic trend
  std::vector<PanelObservation> panel = {obs_with(50, 40, 2, 0.04, 0.2)};
  auto d = build_design(panel, spec, CostChoice::CAOC);

  // Brute-force: enumerate the term set directly.
  const std::size_t n_log = 3 + 1;
  std::set<std::string> expected;
  for (std::size_t i = 0; i < n_log; ++i) expected.insert("L" + std::to_string(i));
  for (std::size_t i = 0; i < n_log; ++i) expected.insert("S" + std::to_string(i));
  for (std::size_t i = 0; i < n_log; ++i)
    for (std::size_t j = i + 1; j < n_log; ++j)
      expected.insert("C" + std::to_string(i) + "_" + std::to_string(j));
  const std::size_t brute = expected.size() + 5 + 2;

  CHECK(d.cols() == brute);
  CHECK(d.cols() == translog_term_count(3, 2, 5, 2));
}

TEST_CASE("term count formula holds across configurations") {
  for (std::size_t L : {1u, 2u, 3u, 4u}) {
    for (std::size_t M : {2u, 3u}) {
      for (std::size_t R : {0u, 2u, 5u}) {
        for (int T : {0, 1, 2}) {
          const std::size_t n_log = L + M - 1;
          CHECK(translog_term_count(L, M, R, T) ==
                n_log + n_log + n_log * (n_log - 1) / 2 + R + static_cast<std::size_t>(T));
        }
      }
    }
  }
}

TEST_CASE("homogeneity: power-of-two price scaling leaves regressors bit-identical") {
  FrontierSpec spec;
  std::vector<PanelObservation> panel = {obs_with(50, 40, 2, 0.04, 0.2, 0),
                                         obs_with(70, 60, 3, 0.05, 0.25, 1)};
  auto base = build_design(panel, spec, CostChoice::OC);

  const double lambda = 4.0;  // exact in floating point
  auto scaled_panel = panel;
  for (auto& o : scaled_panel) {
    o.wage_rate *= lambda;
    o.capital_rate *= lambda;
    o.total_costs = o.interest_expenses + lambda * (o.total_costs - o.interest_expenses);
  }
  auto scaled = build_design(scaled_panel, spec, CostChoice::OC);
  for (Eigen::Index i = 0; i < base.X.rows(); ++i)
    for (Eigen::Index j = 0; j < base.X.cols(); ++j)
      CHECK(base.X(i, j) == scaled.X(i, j));
  for (Eigen::Index i = 0; i < base.y.size(); ++i)
    CHECK(base.y(i) == doctest::Approx(scaled.y(i)).epsilon(1e-15));
}

TEST_CASE("design is order-stable under row permutation") {
  FrontierSpec spec;
  std::vector<PanelObservation> panel = {obs_with(50, 40, 2, 0.04, 0.2, 0),
                                         obs_with(70, 60, 3, 0.05, 0.25, 1),
                                         obs_with(30, 20, 1, 0.03, 0.15, 2)};
  auto d1 = build_design(panel, spec, CostChoice::OC);
  std::vector<PanelObservation> permuted = {panel[2], panel[0], panel[1]};
  auto d2 = build_design(permuted, spec, CostChoice::OC);
  CHECK(d2.X.row(0) == d1.X.row(2));
  CHECK(d2.X.row(1) == d1.X.row(0));
  CHECK(d2.X.row(2) == d1.X.row(1));
}

TEST_CASE("non-positive output raises NonPositiveValue") {
  FrontierSpec spec;
  auto o = obs_with(0, 40, 2, 0.04, 0.2);
  o.fx_loans = o.rub_loans = 0;
  std::vector<PanelObservation> panel = {o};
  CHECK_THROWS_AS(build_design(panel, spec, CostChoice::OC), NonPositiveValue);
}

TEST_CASE("split_fx_loans replaces loans with the fx/rub pair") {
  FrontierSpec spec;
  spec.split_fx_loans = true;
  std::vector<PanelObservation> panel = {obs_with(50, 40, 2, 0.04, 0.2)};
  auto d = build_design(panel, spec, CostChoice::OC);
  CHECK(d.n_outputs == 4);
  CHECK(d.log_vars[0] == "fx_loans");
  CHECK(d.log_vars[1] == "rub_loans");
  CHECK(d.cols() == translog_term_count(4, 2, 5, 2));
  // ln(FX.Loans + offset)
  CHECK(d.X(0, 0) == doctest::Approx(std::log(0.3 * 50 + 1.0)));
}

TEST_CASE("first-order-only elasticities equal the coefficients") {
  FrontierSpec spec;
  spec.risk_covariates = {};
  spec.trend_degree = 0;
  std::vector<PanelObservation> panel = {obs_with(50, 40, 2, 0.04, 0.2),
                                         obs_with(80, 60, 4, 0.06, 0.3, 1)};
  auto d = build_design(panel, spec, CostChoice::OC);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d.cols());
  beta(0) = 0.4;
  beta(1) = 0.3;
  beta(2) = 0.1;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    auto e = output_elasticities(beta, d, r);
    CHECK(e(0) == doctest::Approx(0.4));
    CHECK(e(1) == doctest::Approx(0.3));
    CHECK(e(2) == doctest::Approx(0.1));
    CHECK(returns_to_scale(beta, d, r) == doctest::Approx(1.25));
  }
}

TEST_CASE("elasticities match finite differences of the fitted cost function") {
  FrontierSpec spec;
  std::vector<PanelObservation> base = {obs_with(50, 40, 2, 0.04, 0.2)};
  auto d0 = build_design(base, spec, CostChoice::OC);

  stats::Rng rng(7);
  Eigen::VectorXd beta(d0.cols());
  for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = 0.1 * rng.normal();
  beta(0) = 0.4;

  auto e = output_elasticities(beta, d0, 0);

  // Oracle: bump each output multiplicatively and difference ln cost.
  const std::vector<std::string> outs = {"loans", "deposits", "fee_income"};
  const double h = 1e-5;
  for (std::size_t j = 0; j < outs.size(); ++j) {
    auto up = base[0], dn = base[0];
    auto f = panel_field(outs[j]);
    up.*f *= std::exp(h);
    dn.*f *= std::exp(-h);
    if (outs[j] == "loans") {
      up.fx_loans *= std::exp(h);
      up.rub_loans *= std::exp(h);
      dn.fx_loans *= std::exp(-h);
      dn.rub_loans *= std::exp(-h);
    }
    std::vector<PanelObservation> pu = {up}, pd = {dn};
    auto du = build_design(pu, spec, CostChoice::OC);
    auto dd = build_design(pd, spec, CostChoice::OC);
    const double fd = (du.X.row(0).dot(beta) - dd.X.row(0).dot(beta)) / (2 * h);
    CHECK(std::fabs(e(j) - fd) < 1e-6);
  }
}

TEST_CASE("symmetric fit gives equal elasticities on a symmetric row") {
  FrontierSpec spec;
  spec.risk_covariates = {};
  spec.trend_degree = 0;
  std::vector<PanelObservation> panel = {obs_with(50, 50, 50, 0.2, 0.2)};
  auto d = build_design(panel, spec, CostChoice::OC);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d.cols());
  // same coefficient on every first-order and squared output term
  for (std::size_t c = 0; c < d.terms.size(); ++c) {
    const auto& t = d.terms[c];
    if (t.kind == TermKind::LogLinear && t.a < 3) beta(c) = 0.3;
    if (t.kind == TermKind::HalfSquare && t.a < 3) beta(c) = 0.05;
  }
  auto e = output_elasticities(beta, d, 0);
  CHECK(e(0) == doctest::Approx(e(1)));
  CHECK(e(1) == doctest::Approx(e(2)));
}
