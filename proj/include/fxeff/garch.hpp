#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "fxeff/error.hpp"
#include "fxeff/optim.hpp"
#include "fxeff/stats.hpp"

namespace fxeff::garch {

struct GarchFit {
  double omega = 0;
  double alpha = 0;
  double beta = 0;
  std::vector<double> cond_variance;  // aligned to returns; [0] is the init
  double loglik = 0;
  bool converged = false;
  int iterations = 0;
  // Robust (QMLE sandwich) standard errors on (omega, alpha, beta).
  double se_omega = 0, se_alpha = 0, se_beta = 0;

  double unconditional_variance() const { return omega / (1.0 - alpha - beta); }
};

struct Options {
  int max_iterations = 500;
  double grad_tol = 1e-6;
};

namespace detail {

// Variance recursion with analytic derivatives of the log-likelihood with
// respect to (omega, alpha, beta). h_0 is the sample variance, constant in
// the parameters. Optionally collects per-observation scores.
inline double loglik_natural(std::span<const double> r, double h0, double omega,
                             double alpha, double beta, Eigen::Vector3d* grad,
                             std::vector<Eigen::Vector3d>* scores) {
  const std::size_t n = r.size();
  double h = h0;
  Eigen::Vector3d dh = Eigen::Vector3d::Zero();
  double ll = 0.0;
  if (grad) grad->setZero();
  if (scores) scores->assign(n, Eigen::Vector3d::Zero());
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) {
      const double r2 = r[t - 1] * r[t - 1];
      const Eigen::Vector3d dh_new(1.0 + beta * dh(0), r2 + beta * dh(1),
                                   h + beta * dh(2));
      h = omega + alpha * r2 + beta * h;
      dh = dh_new;
    }
    if (!(h > 0) || !std::isfinite(h)) return -std::numeric_limits<double>::infinity();
    const double z2 = r[t] * r[t] / h;
    ll += -0.5 * (stats::kLog2Pi + std::log(h) + z2);
    const double dldh = -0.5 * (1.0 / h - r[t] * r[t] / (h * h));
    if (grad) *grad += dldh * dh;
    if (scores) (*scores)[t] = dldh * dh;
  }
  return ll;
}

inline void unpack(const Eigen::VectorXd& p, double h0, double& omega, double& alpha,
                   double& beta) {
  const double ea = std::exp(p(1)), eb = std::exp(p(2));
  const double denom = 1.0 + ea + eb;
  omega = std::exp(p(0)) * h0;  // scale by h0 for conditioning
  alpha = ea / denom;
  beta = eb / denom;
}

}  // namespace detail

// Gaussian quasi-MLE for GARCH(1,1). Stationarity alpha + beta < 1 holds by
// construction of the logistic reparameterization.
inline GarchFit fit_garch(std::span<const double> returns, const Options& opt = {}) {
  if (returns.size() < 30) throw DataError("garch: series shorter than 30");
  for (double v : returns)
    if (!std::isfinite(v)) throw DataError("garch: non-finite return");
  const double h0 = stats::variance(returns);
  double meansq = 0;
  for (double v : returns) meansq += v * v / static_cast<double>(returns.size());
  // Relative floor catches constant-but-nonzero series whose FP variance is
  // rounding noise rather than exactly zero.
  if (!(h0 > 0) || h0 <= 1e-12 * meansq)
    throw DataError("garch: degenerate (zero-variance) series");

  auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
    double omega, alpha, beta;
    detail::unpack(p, h0, omega, alpha, beta);
    Eigen::Vector3d gn;
    const double ll = detail::loglik_natural(returns, h0, omega, alpha, beta, &gn, nullptr);
    // Chain rule through the reparameterization.
    const double ea = std::exp(p(1)), eb = std::exp(p(2));
    const double denom = 1.0 + ea + eb;
    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
    J(0, 0) = omega;  // d omega / d p0
    J(1, 1) = ea * (denom - ea) / (denom * denom);   // d alpha / d p1
    J(1, 2) = -ea * eb / (denom * denom);            // d alpha / d p2
    J(2, 1) = -ea * eb / (denom * denom);
    J(2, 2) = eb * (denom - eb) / (denom * denom);
    const Eigen::Vector3d gp = J.transpose() * gn;
    g = -Eigen::VectorXd(gp);
    return -ll;
  };

  // Multi-start, including the constant-variance null so the optimum never
  // falls below it.
  const std::vector<Eigen::Vector3d> starts = {
      {std::log(0.10), std::log(0.07), std::log(0.80)},
      {std::log(0.50), std::log(0.15), std::log(0.40)},
      {std::log(0.98), -8.0, -8.0},
  };
  optim::Result best;
  best.f = std::numeric_limits<double>::infinity();
  optim::Options oopt;
  oopt.max_iterations = opt.max_iterations;
  oopt.grad_tol = opt.grad_tol;
  for (const auto& s : starts) {
    auto r = optim::minimize(objective, Eigen::VectorXd(s), oopt);
    if (std::isfinite(r.f) && r.f < best.f) best = r;
  }
  if (!std::isfinite(best.f)) throw DidNotConverge("garch: all starts failed");

  GarchFit fit;
  detail::unpack(best.x, h0, fit.omega, fit.alpha, fit.beta);
  fit.loglik = -best.f;
  fit.converged = best.converged;
  fit.iterations = best.iterations;

  std::vector<Eigen::Vector3d> scores;
  detail::loglik_natural(returns, h0, fit.omega, fit.alpha, fit.beta, nullptr, &scores);
  Eigen::Matrix3d B = Eigen::Matrix3d::Zero();
  for (const auto& s : scores) B += s * s.transpose();
  auto grad_natural = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
    Eigen::Vector3d gn;
    detail::loglik_natural(returns, h0, th(0), th(1), th(2), &gn, nullptr);
    g = -Eigen::VectorXd(gn);
  };
  Eigen::Vector3d theta(fit.omega, fit.alpha, fit.beta);
  Eigen::Matrix3d A = optim::fd_hessian(grad_natural, Eigen::VectorXd(theta), 1e-6);
  Eigen::Matrix3d Ainv = A.inverse();
  Eigen::Matrix3d V = Ainv * B * Ainv;
  fit.se_omega = std::sqrt(std::max(0.0, V(0, 0)));
  fit.se_alpha = std::sqrt(std::max(0.0, V(1, 1)));
  fit.se_beta = std::sqrt(std::max(0.0, V(2, 2)));

  fit.cond_variance.resize(returns.size());
  double h = h0;
  for (std::size_t t = 0; t < returns.size(); ++t) {
    if (t > 0) h = fit.omega + fit.alpha * returns[t - 1] * returns[t - 1] + fit.beta * h;
    fit.cond_variance[t] = h;
  }
  return fit;
}

inline std::vector<double> implied_volatility(const GarchFit& fit) {
  if (!fit.converged) throw NotConverged();
  std::vector<double> v(fit.cond_variance.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(fit.cond_variance[i]);
  return v;
}

inline std::vector<double> log_returns(std::span<const double> levels) {
  if (levels.size() < 2) throw DataError("log_returns: need at least 2 levels");
  std::vector<double> r(levels.size() - 1);
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i] > 0) || !(levels[i - 1] > 0))
      throw DataError("log_returns: non-positive level");
    r[i - 1] = std::log(levels[i] / levels[i - 1]);
  }
  return r;
}

// Quarterly volatility = root mean square of within-quarter conditional
// volatilities. `group` assigns each volatility observation to a quarter
// index; output follows the sorted distinct group values.
inline std::vector<std::pair<int, double>> quarterly_rms(std::span<const double> vol,
                                                         std::span<const int> group) {
  if (vol.size() != group.size()) throw DataError("quarterly_rms: length mismatch");
  std::map<int, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < vol.size(); ++i) {
    auto& a = acc[group[i]];
    a.first += vol[i] * vol[i];
    a.second += 1;
  }
  std::vector<std::pair<int, double>> out;
  out.reserve(acc.size());
  for (const auto& [g, a] : acc)
    out.push_back({g, std::sqrt(a.first / static_cast<double>(a.second))});
  return out;
}

}  // namespace fxeff::garch
