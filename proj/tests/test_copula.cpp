#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fxeff/copula.hpp"
#include "fxeff/stats.hpp"

using namespace fxeff;

namespace {

// Trapezoid integral of the density grid over the unit square.
double grid_integral(const copula::CopulaDensity& d) {
  const int g = d.grid_size;
  const double step = 1.0 / static_cast<double>(g - 1);
  double total = 0;
  for (int i = 0; i + 1 < g; ++i)
    for (int j = 0; j + 1 < g; ++j)
      total += 0.25 * step * step *
               (d.density(i, j) + d.density(i + 1, j) + d.density(i, j + 1) +
                d.density(i + 1, j + 1));
  return total;
}

// Trapezoid integral over v at a fixed u index: the estimated u-margin.
double margin_u(const copula::CopulaDensity& d, int i) {
  const int g = d.grid_size;
  const double step = 1.0 / static_cast<double>(g - 1);
  double m = 0;
  for (int j = 0; j + 1 < g; ++j)
    m += 0.5 * step * (d.density(i, j) + d.density(i, j + 1));
  return m;
}

copula::PseudoSample independent_sample(std::size_t n, std::uint64_t seed) {
  stats::Rng rng = stats::Rng::derive(seed, 1);
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  return copula::to_pseudo(a, b);
}

}  // namespace

TEST_CASE("pseudo-observations: average ranks over n+1") {
  const std::vector<double> a = {3, 1, 2};
  const std::vector<double> b = {10, 20, 30};
  // Pad to the minimum sample size with distinct values above.
  std::vector<double> aa = a, bb = b;
  for (int k = 0; k < 7; ++k) {
    aa.push_back(100.0 + k);
    bb.push_back(100.0 + k);
  }
  const auto s = copula::to_pseudo(aa, bb);
  REQUIRE(s.n() == 10);
  CHECK(s.pairs[0].first == doctest::Approx(3.0 / 11.0).epsilon(1e-12));
  CHECK(s.pairs[1].first == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
  CHECK(s.pairs[2].first == doctest::Approx(2.0 / 11.0).epsilon(1e-12));
  CHECK(s.pairs[0].second == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
}

TEST_CASE("pseudo-observations: ties share the average rank") {
  std::vector<double> a(12, 7.0);  // all tied
  std::vector<double> b(12);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<double>(i);
  const auto s = copula::to_pseudo(a, b);
  for (const auto& p : s.pairs)
    CHECK(p.first == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pseudo-observations: input validation") {
  std::vector<double> a(12, 1.0), b(11, 1.0);
  CHECK_THROWS_AS(copula::to_pseudo(a, b), DataError);
  std::vector<double> small(9, 1.0);
  CHECK_THROWS_AS(copula::to_pseudo(small, small), TooFewObservations);
  std::vector<double> bad(12, 1.0);
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> ok(12, 2.0);
  CHECK_THROWS_AS(copula::to_pseudo(bad, ok), DataError);
}

TEST_CASE("rank invariance: monotone transforms leave the density bitwise unchanged") {
  stats::Rng rng = stats::Rng::derive(5, 2);
  std::vector<double> a(200), b(200), ta(200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.normal();
    b[i] = 0.5 * a[i] + rng.normal();
    ta[i] = std::exp(2.0 * a[i]) + 7.0;  // strictly increasing transform
  }
  const auto s1 = copula::to_pseudo(a, b);
  const auto s2 = copula::to_pseudo(ta, b);
  REQUIRE(s1.n() == s2.n());
  for (std::size_t i = 0; i < s1.n(); ++i) {
    CHECK(s1.pairs[i].first == s2.pairs[i].first);
    CHECK(s1.pairs[i].second == s2.pairs[i].second);
  }
  const auto d1 = copula::estimate_density(s1);
  const auto d2 = copula::estimate_density(s2);
  CHECK(d1.h_u == d2.h_u);
  CHECK((d1.density - d2.density).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("independence: density close to uniform, margins flat, unit mass") {
  const auto s = independent_sample(2000, 42);
  const auto d = copula::estimate_density(s);
  CHECK(d.bandwidth_method == "cv");
  CHECK(!d.bandwidth_fallback);

  double sup = 0;
  for (int i = 0; i < d.grid_size; ++i)
    for (int j = 0; j < d.grid_size; ++j)
      sup = std::max(sup, std::fabs(d.density(i, j) - 1.0));
  CHECK(sup < 0.15);

  CHECK(std::fabs(grid_integral(d) - 1.0) < 1e-2);
  for (int i = 0; i < d.grid_size; ++i)
    CHECK(std::fabs(margin_u(d, i) - 1.0) < 0.1);

  const auto r = copula::tail_report(d);
  CHECK(std::fabs(r.ratio_low_low - 1.0) < 0.25);
  CHECK(std::fabs(r.ratio_high_low - 1.0) < 0.25);
  CHECK(std::fabs(r.ratio_low_high - 1.0) < 0.25);
  CHECK(std::fabs(r.ratio_high_high - 1.0) < 0.25);
}

TEST_CASE("comonotone and countermonotone samples load the matching corners") {
  stats::Rng rng = stats::Rng::derive(9, 3);
  std::vector<double> a(1000);
  for (auto& x : a) x = rng.normal();
  std::vector<double> same = a;
  std::vector<double> neg(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) neg[i] = -a[i];

  const auto dc = copula::estimate_density(copula::to_pseudo(a, same));
  // Diagonal corners carry at least 5x the independence benchmark (2 eps^2).
  const double bench = 2.0 * dc.corner_eps * dc.corner_eps;
  CHECK(dc.corner_mass.low_low + dc.corner_mass.high_high > 5.0 * bench);
  CHECK(dc.corner_mass.low_high + dc.corner_mass.high_low < bench);

  const auto da = copula::estimate_density(copula::to_pseudo(a, neg));
  CHECK(da.corner_mass.low_high + da.corner_mass.high_low > 5.0 * bench);
  CHECK(da.corner_mass.low_low + da.corner_mass.high_high < bench);
}

TEST_CASE("exchange symmetry: swapping the series transposes the grid") {
  stats::Rng rng = stats::Rng::derive(11, 4);
  std::vector<double> a(300), b(300);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.normal();
    b[i] = 0.3 * a[i] * a[i] + rng.normal();
  }
  const auto dab = copula::estimate_density(copula::to_pseudo(a, b));
  const auto dba = copula::estimate_density(copula::to_pseudo(b, a));
  CHECK(dab.h_u == dba.h_v);
  CHECK(dab.h_v == dba.h_u);
  CHECK((dab.density - dba.density.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eps = 0.5: the four corners tile the square, ratios average to 1") {
  const auto s = independent_sample(500, 21);
  copula::DensityOptions opt;
  opt.corner_eps = 0.5;
  const auto d = copula::estimate_density(s, opt);
  const auto r = copula::tail_report(d);
  const double sum = d.corner_mass.low_low + d.corner_mass.high_low +
                     d.corner_mass.low_high + d.corner_mass.high_high;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  const double avg = 0.25 * (r.ratio_low_low + r.ratio_high_low +
                             r.ratio_low_high + r.ratio_high_high);
  CHECK(avg == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a penalized subgroup shows up in the (0,1) corner only") {
  // 10% of banks rank low on the first measure and high on the second; the
  // rest are rank-independent.
  stats::Rng rng = stats::Rng::derive(33, 5);
  const std::size_t n = 2000, k = 200;
  std::vector<double> kept(n), dropped(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < k) {
      kept[i] = -10.0 - rng.uniform();    // bottom ranks
      dropped[i] = 10.0 + rng.uniform();  // top ranks
    } else {
      kept[i] = rng.normal();
      dropped[i] = rng.normal();
    }
  }
  const auto d = copula::estimate_density(copula::to_pseudo(kept, dropped));
  const auto r = copula::tail_report(d);
  CHECK(r.kept_low_dropped_high == r.ratio_low_high);
  CHECK(r.ratio_low_high > 2.0);
  CHECK(std::fabs(r.ratio_high_low - 1.0) < 0.5);
}

TEST_CASE("grid evaluation is identical for any thread count") {
  const auto s = independent_sample(400, 17);
  copula::DensityOptions one, four;
  four.threads = 4;
  const auto d1 = copula::estimate_density(s, one);
  const auto d4 = copula::estimate_density(s, four);
  CHECK((d1.density - d4.density).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("small samples use the rule-of-thumb bandwidth without a failure flag") {
  const auto s = independent_sample(20, 3);
  const auto d = copula::estimate_density(s);
  CHECK(d.bandwidth_method == "rot");
  CHECK(!d.bandwidth_fallback);
  CHECK(d.h_u > 0);
  CHECK(std::fabs(grid_integral(d) - 1.0) < 1e-2);
}

TEST_CASE("density options are validated") {
  const auto s = independent_sample(100, 8);
  copula::DensityOptions opt;
  opt.grid_size = 5;
  CHECK_THROWS_AS(copula::estimate_density(s, opt), ConfigError);
  opt = {};
  opt.corner_eps = 0.6;
  CHECK_THROWS_AS(copula::estimate_density(s, opt), ConfigError);
  opt = {};
  opt.h_min = 0.5;
  opt.h_max = 0.1;
  CHECK_THROWS_AS(copula::estimate_density(s, opt), ConfigError);
}
