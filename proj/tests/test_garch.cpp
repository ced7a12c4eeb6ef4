#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fxeff/garch.hpp"
#include "fxeff/stats.hpp"

using namespace fxeff;

namespace {

std::vector<double> simulate_garch(double omega, double alpha, double beta,
                                   std::size_t n, stats::Rng& rng) {
  std::vector<double> r(n);
  double h = omega / (1.0 - alpha - beta);
  double prev = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) h = omega + alpha * prev * prev + beta * h;
    prev = std::sqrt(h) * rng.normal();
    r[t] = prev;
  }
  return r;
}

}  // namespace

TEST_CASE("iid gaussian returns: alpha near zero, omega near sample variance") {
  stats::Rng rng(42);
  std::vector<double> r(5000);
  for (auto& v : r) v = 0.5 * rng.normal();
  auto fit = garch::fit_garch(r);
  CHECK(fit.converged);
  CHECK(fit.alpha < 0.05);
  // omega/(1-alpha-beta) is not identified on iid data (a flat ridge), but
  // the average fitted conditional variance must track the sample variance.
  double mean_h = 0;
  for (double h : fit.cond_variance) mean_h += h / fit.cond_variance.size();
  CHECK(mean_h == doctest::Approx(stats::variance(r)).epsilon(0.15));
}

TEST_CASE("simulated garch(1,1) parameters recovered within 3 SEs") {
  stats::Rng rng(7);
  auto r = simulate_garch(0.1, 0.1, 0.8, 10000, rng);
  auto fit = garch::fit_garch(r);
  REQUIRE(fit.converged);
  CHECK(std::fabs(fit.omega - 0.1) < 3 * fit.se_omega);
  CHECK(std::fabs(fit.alpha - 0.1) < 3 * fit.se_alpha);
  CHECK(std::fabs(fit.beta - 0.8) < 3 * fit.se_beta);
  CHECK(fit.alpha + fit.beta < 1.0);
}

TEST_CASE("constant series raises a degenerate-input error") {
  std::vector<double> r(100, 0.3);
  CHECK_THROWS_AS(garch::fit_garch(r), DataError);
}

TEST_CASE("short series rejected") {
  std::vector<double> r(20, 0.0);
  CHECK_THROWS_AS(garch::fit_garch(r), DataError);
}

TEST_CASE("implied volatility is the square root of the conditional variance") {
  stats::Rng rng(3);
  auto r = simulate_garch(0.2, 0.1, 0.7, 500, rng);
  auto fit = garch::fit_garch(r);
  REQUIRE(fit.converged);
  auto vol = garch::implied_volatility(fit);
  for (std::size_t i = 0; i < vol.size(); ++i)
    CHECK(vol[i] == doctest::Approx(std::sqrt(fit.cond_variance[i])));

  // Definitional recursion check, exact.
  double h = fit.cond_variance[0];
  for (std::size_t t = 1; t < r.size(); ++t) {
    h = fit.omega + fit.alpha * r[t - 1] * r[t - 1] + fit.beta * h;
    CHECK(fit.cond_variance[t] == doctest::Approx(h).epsilon(1e-14));
  }
}

TEST_CASE("volatility spikes trail an injected outlier return") {
  stats::Rng rng(11);
  auto r = simulate_garch(0.05, 0.08, 0.85, 800, rng);
  const std::size_t shock_at = 400;
  r[shock_at] = 15.0 * std::sqrt(0.05 / (1 - 0.93));
  auto fit = garch::fit_garch(r);
  REQUIRE(fit.converged);
  auto vol = garch::implied_volatility(fit);
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < vol.size(); ++i)
    if (vol[i] > vol[argmax]) argmax = i;
  CHECK(argmax >= shock_at);
  CHECK(argmax <= shock_at + 3);
}

TEST_CASE("optimum dominates the constant-variance null") {
  stats::Rng rng(5);
  auto r = simulate_garch(0.1, 0.15, 0.7, 2000, rng);
  auto fit = garch::fit_garch(r);
  const double v = stats::variance(r);
  double null_ll = 0.0;
  for (double x : r) null_ll += -0.5 * (stats::kLog2Pi + std::log(v) + x * x / v);
  CHECK(fit.loglik >= null_ll - 1e-6);
  CHECK(std::isfinite(fit.unconditional_variance()));
}

TEST_CASE("scale equivariance: returns scaled by c rescale omega by c^2") {
  stats::Rng rng(9);
  auto r = simulate_garch(0.1, 0.1, 0.8, 6000, rng);
  auto fit1 = garch::fit_garch(r);
  std::vector<double> r2 = r;
  for (auto& v : r2) v *= 3.0;
  auto fit2 = garch::fit_garch(r2);
  CHECK(fit2.omega == doctest::Approx(9.0 * fit1.omega).epsilon(1e-3));
  CHECK(std::fabs(fit2.alpha - fit1.alpha) < 1e-4);
  CHECK(std::fabs(fit2.beta - fit1.beta) < 1e-4);
}

TEST_CASE("quarterly volatility aggregates by root mean square") {
  std::vector<double> vol = {2.0, 2.0, 2.0, 4.0, 4.0};
  std::vector<int> group = {0, 0, 0, 1, 1};
  auto agg = garch::quarterly_rms(vol, group);
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].second == doctest::Approx(2.0));
  CHECK(agg[1].second == doctest::Approx(4.0));
}

TEST_CASE("log_returns of constant positive levels are zero") {
  std::vector<double> levels = {75.0, 75.0, 75.0};
  auto r = garch::log_returns(levels);
  for (double v : r) CHECK(v == 0.0);
}
