#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "fxeff/sfa.hpp"
#include "fxeff/stats.hpp"
#include "oracles.hpp"

using namespace fxeff;

namespace {

// Small synthetic SFA dataset with known parameters; independent of the
// synth module so these tests stand alone.
struct SimData {
  sfa::SfaData data;
  std::vector<Quarter> quarters;
  Eigen::VectorXd beta_true;
  Eigen::VectorXd delta_true;
  double su_true, sv_true;
  std::vector<double> u_true;
};

SimData simulate(std::size_t n_banks, std::size_t n_quarters, double su, double sv,
                 std::uint64_t seed) {
  stats::Rng rng(seed);
  const std::size_t n = n_banks * n_quarters;
  const std::size_t p = 3;  // regressors besides intercept
  SimData s;
  s.beta_true.resize(1 + p);
  s.beta_true << 1.0, 0.5, -0.3, 0.2;
  s.delta_true.resize(2);
  s.delta_true << 0.4, 0.6;  // constant, one covariate
  s.su_true = su;
  s.sv_true = sv;

  s.data.Xa.resize(n, 1 + p);
  s.data.Z.resize(n, 2);
  s.data.y.resize(n);
  std::size_t i = 0;
  for (std::size_t b = 0; b < n_banks; ++b) {
    const double zcov = rng.uniform();  // bank-level covariate in [0,1]
    for (std::size_t t = 0; t < n_quarters; ++t, ++i) {
      s.data.Xa(i, 0) = 1.0;
      for (std::size_t j = 1; j <= p; ++j) s.data.Xa(i, j) = rng.normal();
      s.data.Z(i, 0) = 1.0;
      s.data.Z(i, 1) = zcov;
      const double mu = s.delta_true(0) + s.delta_true(1) * zcov;
      const double u = su > 0 ? rng.truncated_normal_pos(mu, su) : 0.0;
      const double v = rng.normal(0.0, sv);
      s.u_true.push_back(u);
      s.data.y(i) = s.data.Xa.row(i).dot(s.beta_true) + u + v;
      s.data.bank_ids.push_back("b" + std::to_string(b));
      s.quarters.push_back(Quarter{static_cast<int>(t)});
    }
  }
  s.data.names = {"const", "x1", "x2", "x3", "z_const", "z_cov",
                  "log_sigma_u2", "log_sigma_v2"};
  return s;
}

Eigen::VectorXd pack(const SimData& s, double su2, double sv2) {
  Eigen::VectorXd th(s.beta_true.size() + s.delta_true.size() + 2);
  th << s.beta_true, s.delta_true, std::log(su2), std::log(sv2);
  return th;
}

}  // namespace

TEST_CASE("composed-error log-density matches quadrature to 1e-8") {
  auto s = simulate(10, 5, 1.0, 0.3, 21);
  stats::Rng rng(99);
  for (int k = 0; k < 30; ++k) {
    const double eps = 3.0 * rng.normal();
    const double mu = rng.normal();
    const double su2 = std::exp(rng.normal(0.0, 0.5));
    const double sv2 = std::exp(rng.normal(-1.0, 0.5));
    const double ld = sfa::composed_error_logdensity(eps, mu, su2, sv2);
    const double q = oracles::composed_density_quadrature(eps, mu, su2, sv2);
    CHECK(std::fabs(ld - std::log(q)) < 1e-8);
  }
}

TEST_CASE("per-observation likelihood on a 50-row panel matches quadrature") {
  auto s = simulate(10, 5, 1.0, 0.3, 31);
  stats::Rng rng(5);
  Eigen::VectorXd th = pack(s, 1.2, 0.2);
  for (Eigen::Index j = 0; j < th.size(); ++j) th(j) += 0.1 * rng.normal();
  const double su2 = std::exp(th(6)), sv2 = std::exp(th(7));
  double total = 0;
  for (std::size_t i = 0; i < s.data.n(); ++i) {
    const double eps = s.data.y(i) - s.data.Xa.row(i).dot(th.head(4));
    const double mu = s.data.Z.row(i).dot(th.segment(4, 2));
    const double ld = sfa::composed_error_logdensity(eps, mu, su2, sv2);
    const double q = oracles::composed_density_quadrature(eps, mu, su2, sv2);
    CHECK(std::fabs(ld - std::log(q)) < 1e-8);
    total += ld;
  }
  CHECK(sfa::loglikelihood(th, s.data) == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central differences at 20 random points") {
  auto s = simulate(8, 6, 0.8, 0.25, 17);
  stats::Rng rng(123);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd th = pack(s, 1.0, 0.2);
    for (Eigen::Index j = 0; j < th.size(); ++j) th(j) += 0.3 * rng.normal();
    Eigen::VectorXd g;
    sfa::loglik_grad(th, s.data, g);
    auto fd = oracles::fd_gradient(
        [&](const Eigen::VectorXd& x) { return sfa::loglikelihood(x, s.data); }, th);
    for (Eigen::Index j = 0; j < th.size(); ++j) {
      const double denom = std::max(1.0, std::fabs(fd(j)));
      CHECK(std::fabs(g(j) - fd(j)) / denom < 1e-5);
    }
  }
}

TEST_CASE("degenerate frontier: sigma_u -> 0 approaches the OLS normal loglik") {
  auto s = simulate(10, 5, 0.0, 0.3, 41);
  Eigen::VectorXd th = pack(s, 1e-12, 0.09);
  th(4) = 0.0;  // mu = 0
  th(5) = 0.0;
  double ols_ll = 0.0;
  for (std::size_t i = 0; i < s.data.n(); ++i) {
    const double e = s.data.y(i) - s.data.Xa.row(i).dot(th.head(4));
    ols_ll += -0.5 * (stats::kLog2Pi + std::log(0.09) + e * e / 0.09);
  }
  // With mu = 0 half of u's mass folds onto [0, inf): the exact limit is
  // OLS loglik + n*ln(2) - correction; as sigma_u -> 0 the density tends to
  // the plain normal. Allow the slack of the tiny remaining su2.
  CHECK(sfa::loglikelihood(th, s.data) == doctest::Approx(ols_ll).epsilon(1e-4));
}

TEST_CASE("cost orientation: shifting costs up lowers fitted efficiency") {
  auto s = simulate(20, 10, 1.0, 0.2, 51);
  auto fit = sfa::fit_frontier(s.data);
  REQUIRE(fit.converged);
  auto base = sfa::efficiency_scores(fit, s.data, s.quarters);
  auto shifted = s.data;
  shifted.y.array() += 0.5;
  auto up = sfa::efficiency_scores(fit, shifted, s.quarters);
  double mean_base = 0, mean_up = 0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    mean_base += base[i].ce;
    mean_up += up[i].ce;
  }
  CHECK(mean_up < mean_base);
}

TEST_CASE("parameter recovery on a synthetic panel within 3 cluster SEs") {
  auto s = simulate(150, 24, 1.0, 0.2, 61);
  auto fit = sfa::fit_frontier(s.data);
  REQUIRE(fit.converged);
  Eigen::VectorXd truth(8);
  truth << s.beta_true, s.delta_true, std::log(1.0), std::log(0.04);
  const Eigen::VectorXd est = fit.packed();
  for (Eigen::Index j = 0; j < truth.size(); ++j) {
    CHECK(std::fabs(est(j) - truth(j)) < 3.0 * fit.cluster_se(j));
  }
  CHECK(fit.sigma_u == doctest::Approx(1.0).epsilon(0.2));
  CHECK(fit.sigma_v == doctest::Approx(0.2).epsilon(0.25));
}

TEST_CASE("rmse of beta shrinks when quarters double") {
  double rmse_short = 0, rmse_long = 0;
  for (std::uint64_t seed : {71u, 72u, 73u}) {
    auto s1 = simulate(100, 10, 1.0, 0.2, seed);
    auto s2 = simulate(100, 20, 1.0, 0.2, seed + 100);
    auto f1 = sfa::fit_frontier(s1.data);
    auto f2 = sfa::fit_frontier(s2.data);
    rmse_short += (f1.beta - s1.beta_true).squaredNorm();
    rmse_long += (f2.beta - s2.beta_true).squaredNorm();
  }
  CHECK(rmse_long < rmse_short);
}

TEST_CASE("no-inefficiency data: fitted sigma_u small, mean CE high") {
  auto s = simulate(80, 12, 0.0, 0.1, 81);
  sfa::FitOptions opt;
  opt.half_normal = true;  // mu free would soak up noise as spurious u
  auto fit = sfa::fit_frontier(s.data, opt);
  auto scores = sfa::efficiency_scores(fit, s.data, s.quarters);
  double mean_ce = 0;
  for (const auto& sc : scores) mean_ce += sc.ce;
  mean_ce /= scores.size();
  CHECK(mean_ce > 0.9);
}

TEST_CASE("score at zero residual matches a Monte-Carlo posterior to 3 decimals") {
  // Half-normal posterior at eps = 0, mu = 0.
  const double su = 0.8, sv = 0.4;
  const double su2 = su * su, sv2 = sv * sv, s2 = su2 + sv2;
  const double sstar = std::sqrt(su2 * sv2 / s2);
  const double mustar = 0.0;
  const double b = mustar / sstar;
  const double closed = std::exp(-mustar + 0.5 * sstar * sstar) *
                        stats::norm_cdf(b - sstar) / stats::norm_cdf(b);

  // Monte-Carlo oracle: sample u | eps = 0 from N(mustar, sstar^2) truncated
  // at 0, average exp(-u).
  stats::Rng rng(2024);
  double acc = 0;
  const int N = 1000000;
  for (int i = 0; i < N; ++i)
    acc += std::exp(-rng.truncated_normal_pos(mustar, sstar));
  acc /= N;
  CHECK(closed == doctest::Approx(acc).epsilon(2e-3));

  // And the implementation agrees with the closed form.
  sfa::SfaFit fit;
  fit.beta = Eigen::VectorXd::Zero(1);
  fit.delta = Eigen::VectorXd::Zero(1);
  fit.log_su2 = std::log(su2);
  fit.log_sv2 = std::log(sv2);
  fit.converged = true;
  sfa::SfaData d;
  d.Xa = Eigen::MatrixXd::Ones(1, 1);
  d.Z = Eigen::MatrixXd::Ones(1, 1) * 0.0;
  d.y = Eigen::VectorXd::Zero(1);
  d.bank_ids = {"b"};
  auto sc = sfa::efficiency_scores(fit, d, std::vector<Quarter>{Quarter{0}});
  CHECK(sc[0].ce == doctest::Approx(closed).epsilon(1e-10));
}

TEST_CASE("scores in (0,1] and monotone in the composed residual") {
  const double su2 = 0.5, sv2 = 0.1;
  sfa::SfaFit fit;
  fit.beta = Eigen::VectorXd::Zero(1);
  fit.delta = Eigen::VectorXd::Zero(1);
  fit.log_su2 = std::log(su2);
  fit.log_sv2 = std::log(sv2);
  fit.converged = true;
  double prev_ce = 2.0;
  for (double eps = -3.0; eps <= 3.0; eps += 0.25) {
    sfa::SfaData d;
    d.Xa = Eigen::MatrixXd::Zero(1, 1);
    d.Z = Eigen::MatrixXd::Zero(1, 1);
    d.y = Eigen::VectorXd::Constant(1, eps);
    d.bank_ids = {"b"};
    auto sc = sfa::efficiency_scores(fit, d, std::vector<Quarter>{Quarter{0}});
    CHECK(sc[0].ce > 0.0);
    CHECK(sc[0].ce <= 1.0);
    CHECK(sc[0].ce < prev_ce);
    prev_ce = sc[0].ce;
  }
}

TEST_CASE("sigma_u/sigma_v -> 0 pushes all scores to 1") {
  sfa::SfaFit fit;
  fit.beta = Eigen::VectorXd::Zero(1);
  fit.delta = Eigen::VectorXd::Zero(1);
  fit.log_su2 = std::log(1e-10);
  fit.log_sv2 = std::log(0.2);
  fit.converged = true;
  sfa::SfaData d;
  d.Xa = Eigen::MatrixXd::Zero(3, 1);
  d.Z = Eigen::MatrixXd::Zero(3, 1);
  d.y.resize(3);
  d.y << -0.5, 0.0, 0.7;
  d.bank_ids = {"a", "b", "c"};
  auto sc = sfa::efficiency_scores(
      fit, d, std::vector<Quarter>{Quarter{0}, Quarter{0}, Quarter{0}});
  for (const auto& s : sc) CHECK(s.ce > 0.999);
}

TEST_CASE("translation invariance: shifting a regressor only moves the intercept") {
  auto s = simulate(60, 12, 1.0, 0.2, 91);
  auto fit1 = sfa::fit_frontier(s.data);
  auto shifted = s.data;
  shifted.Xa.col(1).array() += 5.0;
  auto fit2 = sfa::fit_frontier(shifted);
  CHECK(fit2.loglik == doctest::Approx(fit1.loglik).epsilon(1e-6));
  CHECK(fit2.beta(1) == doctest::Approx(fit1.beta(1)).epsilon(1e-4));
  CHECK(fit2.beta(0) == doctest::Approx(fit1.beta(0) - 5.0 * fit1.beta(1)).epsilon(1e-3));
}

TEST_CASE("estimation is deterministic for a fixed seed") {
  auto s = simulate(30, 10, 0.8, 0.2, 101);
  auto f1 = sfa::fit_frontier(s.data);
  auto f2 = sfa::fit_frontier(s.data);
  CHECK(f1.loglik == f2.loglik);
  CHECK((f1.packed() - f2.packed()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-converged fit refuses to score") {
  sfa::SfaFit fit;
  fit.converged = false;
  sfa::SfaData d;
  CHECK_THROWS_AS(sfa::efficiency_scores(fit, d, {}), NotConverged);
}

TEST_CASE("constant regressor column is reported as rank-deficient") {
  auto s = simulate(10, 6, 0.5, 0.2, 111);
  s.data.Xa.col(2).setConstant(1.0);  // duplicates the intercept
  CHECK_THROWS_AS(sfa::fit_frontier(s.data), RankDeficientDesign);
}
