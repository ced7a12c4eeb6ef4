#pragma once

// Test-only oracles, kept independent of the implementation paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracles {

// Composite Simpson quadrature of the normal/truncated-normal convolution
// density: f(eps) = int_0^inf N(eps - u; 0, sv2) * N+(u; mu, su2) du.
inline double composed_density_quadrature(double eps, double mu, double su2,
                                          double sv2, int intervals = 40000) {
  const double su = std::sqrt(su2), sv = std::sqrt(sv2);
  const double s2 = su2 + sv2;
  const double mustar = (sv2 * mu + su2 * eps) / s2;
  const double sstar = std::sqrt(su2 * sv2 / s2);
  // Keep at least [0, 14*sstar] so the boundary spike of a far-negative
  // mustar (mass piled just above u = 0) stays inside the window.
  const double lo = std::max(0.0, mustar - 14.0 * sstar);
  const double hi = std::max(mustar + 14.0 * sstar, lo + 14.0 * sstar);
  const double norm_u = 0.5 * std::erfc(-(mu / su) / std::sqrt(2.0));  // P(u>0... Phi(mu/su))
  auto integrand = [&](double u) {
    const double zv = (eps - u) / sv;
    const double zu = (u - mu) / su;
    const double fv = std::exp(-0.5 * zv * zv) / (sv * std::sqrt(2.0 * M_PI));
    const double fu = std::exp(-0.5 * zu * zu) / (su * std::sqrt(2.0 * M_PI)) / norm_u;
    return fv * fu;
  };
  const double h = (hi - lo) / intervals;
  double sum = integrand(lo) + integrand(hi);
  for (int i = 1; i < intervals; ++i)
    sum += integrand(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

// Central finite differences of a scalar function.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double hj = h * std::max(1.0, std::fabs(x(j)));
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += hj;
    xm(j) -= hj;
    g(j) = (f(xp) - f(xm)) / (2.0 * hj);
  }
  return g;
}

// Fixed-effects regression by explicit dummy-variable OLS over the normal
// equations: y on [X, bank dummies, quarter dummies] with one reference
// level dropped per absorbed dimension (and the intercept kept).
inline Eigen::VectorXd dummy_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const std::vector<std::string>& bank,
                                 const std::vector<int>& quarter, bool bank_fe,
                                 bool quarter_fe) {
  const Eigen::Index n = X.rows();
  std::vector<std::string> banks(bank.begin(), bank.end());
  std::sort(banks.begin(), banks.end());
  banks.erase(std::unique(banks.begin(), banks.end()), banks.end());
  std::vector<int> quarters(quarter.begin(), quarter.end());
  std::sort(quarters.begin(), quarters.end());
  quarters.erase(std::unique(quarters.begin(), quarters.end()), quarters.end());

  const Eigen::Index nb = bank_fe ? static_cast<Eigen::Index>(banks.size()) - 1 : 0;
  const Eigen::Index nq = quarter_fe ? static_cast<Eigen::Index>(quarters.size()) - 1 : 0;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, 1 + X.cols() + nb + nq);
  D.col(0).setOnes();
  D.middleCols(1, X.cols()) = X;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (bank_fe) {
      auto it = std::lower_bound(banks.begin(), banks.end(), bank[i]);
      const Eigen::Index k = it - banks.begin();
      if (k > 0) D(i, 1 + X.cols() + k - 1) = 1.0;
    }
    if (quarter_fe) {
      auto it = std::lower_bound(quarters.begin(), quarters.end(), quarter[i]);
      const Eigen::Index k = it - quarters.begin();
      if (k > 0) D(i, 1 + X.cols() + nb + k - 1) = 1.0;
    }
  }
  const Eigen::VectorXd full = (D.transpose() * D).ldlt().solve(D.transpose() * y);
  return full.segment(1, X.cols());
}

}  // namespace oracles
