#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>

namespace fxeff::optim {

struct Options {
  int max_iterations = 500;
  double grad_tol = 1e-5;     // max-norm of the gradient
  double rel_f_tol = 1e-9;    // relative objective change
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  double max_step = 20.0;  // search-direction cap, times max(1, ||x||)
  int max_line_search = 50;
};

struct Result {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;
};

// Objective: f(x, grad) -> value, writing the gradient into `grad`.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Dense BFGS minimizer with a backtracking line search enforcing Armijo
// decrease plus a curvature check before the inverse-Hessian update.
inline Result minimize(const Objective& fn, const Eigen::VectorXd& x0,
                       const Options& opt = {}) {
  const Eigen::Index n = x0.size();
  Result res;
  res.x = x0;
  res.grad.resize(n);
  res.f = fn(res.x, res.grad);
  if (!std::isfinite(res.f)) return res;

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd x_new(n), g_new(n);
  bool h_is_identity = true;

  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it + 1;
    const double gtol = opt.grad_tol * std::max(1.0, std::fabs(res.f));
    if (res.grad.cwiseAbs().maxCoeff() < gtol) {
      res.converged = true;
      return res;
    }
    Eigen::VectorXd p = -(H * res.grad);
    double slope = res.grad.dot(p);
    if (!(slope < 0)) {  // restart when curvature information went bad
      H.setIdentity();
      h_is_identity = true;
      p = -res.grad;
      slope = res.grad.dot(p);
    }
    // Trust-region-style cap so a steep gradient cannot fling the iterate
    // into numerically invalid territory.
    const double max_step = opt.max_step * std::max(1.0, res.x.norm());
    if (p.norm() > max_step) {
      const double shrink = max_step / p.norm();
      p *= shrink;
      slope *= shrink;
    }

    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    bool ok = false;
    for (int ls = 0; ls < opt.max_line_search; ++ls) {
      x_new = res.x + step * p;
      f_new = fn(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= res.f + opt.wolfe_c1 * step * slope) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      if (!h_is_identity) {  // retry from steepest descent before giving up
        H.setIdentity();
        h_is_identity = true;
        continue;
      }
      // No admissible step along the gradient itself: report the best point.
      return res;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd yv = g_new - res.grad;
    const double f_old = res.f;
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;

    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * yv;
      // H <- (I - rho s y') H (I - rho y s') + rho s s'
      H.noalias() -= rho * (s * Hy.transpose() + Hy * s.transpose());
      H.noalias() += rho * rho * (yv.dot(Hy) + sy) * (s * s.transpose());
      h_is_identity = false;
    }

    const double denom = std::max({std::fabs(f_old), std::fabs(res.f), 1.0});
    const double gtol_new = opt.grad_tol * std::max(1.0, std::fabs(res.f));
    if (std::fabs(f_old - res.f) < opt.rel_f_tol * denom &&
        res.grad.cwiseAbs().maxCoeff() < gtol_new) {
      res.converged = true;
      return res;
    }
  }
  res.converged =
      res.grad.cwiseAbs().maxCoeff() < opt.grad_tol * std::max(1.0, std::fabs(res.f));
  return res;
}

// Central finite differences of a scalar function; used by estimators for
// Hessian-based standard errors (never for the search direction).
template <typename F>
Eigen::MatrixXd fd_hessian(const F& fn_grad, const Eigen::VectorXd& x, double h = 1e-5) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd Hn(n, n);
  Eigen::VectorXd gp(n), gm(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double hj = h * std::max(1.0, std::fabs(x(j)));
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += hj;
    xm(j) -= hj;
    fn_grad(xp, gp);
    fn_grad(xm, gm);
    Hn.col(j) = (gp - gm) / (2.0 * hj);
  }
  return 0.5 * (Hn + Hn.transpose());
}

}  // namespace fxeff::optim
