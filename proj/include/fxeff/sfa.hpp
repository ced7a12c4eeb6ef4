#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <future>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fxeff/error.hpp"
#include "fxeff/optim.hpp"
#include "fxeff/panel.hpp"
#include "fxeff/stats.hpp"
#include "fxeff/translog.hpp"

namespace fxeff::sfa {

// Covariates of the pre-truncation inefficiency mean (z'delta). Ownership
// dummies use DomesticPrivate as the reference group.
struct InefficiencySpec {
  std::vector<std::string> covariates = {
      "big4",          "other_state",          "foreign",
      "bailout",       "tight_regulation",     "liquidity_ratio",
      "lt_loans_firms_ratio", "lt_loans_hh_ratio", "asset_growth_4q",
      "equity_ratio"};
  bool include_constant = true;
  int lag = 0;  // quarters; covariates taken from the lagged row when > 0

  std::vector<std::string> column_names() const {
    std::vector<std::string> n;
    if (include_constant) n.push_back("z_const");
    for (const auto& c : covariates) n.push_back("z_" + c);
    return n;
  }
};

inline double z_value(const PanelObservation& o, const std::string& name) {
  if (name == "big4") return o.ownership == Ownership::Big4 ? 1.0 : 0.0;
  if (name == "other_state") return o.ownership == Ownership::OtherState ? 1.0 : 0.0;
  if (name == "foreign") return o.ownership == Ownership::Foreign ? 1.0 : 0.0;
  if (name == "bailout") return o.bailout ? 1.0 : 0.0;
  if (name == "tight_regulation") return o.tight_regulation ? 1.0 : 0.0;
  return o.*panel_field(name);
}

// Inefficiency covariate matrix aligned to `panel`. With a positive lag,
// rows whose lagged quarter is missing get NaN and must be filtered before
// estimation.
inline Eigen::MatrixXd build_z(std::span<const PanelObservation> panel,
                               const InefficiencySpec& spec) {
  const std::size_t q = spec.covariates.size() + (spec.include_constant ? 1 : 0);
  Eigen::MatrixXd Z(panel.size(), q);
  std::map<std::pair<std::string, int>, std::size_t> index;
  if (spec.lag > 0)
    for (std::size_t i = 0; i < panel.size(); ++i)
      index[{panel[i].bank_id, panel[i].quarter.index}] = i;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    const PanelObservation* src = &panel[i];
    if (spec.lag > 0) {
      auto it = index.find({panel[i].bank_id, panel[i].quarter.index - spec.lag});
      if (it == index.end()) {
        Z.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      src = &panel[it->second];
    }
    std::size_t c = 0;
    if (spec.include_constant) Z(i, c++) = 1.0;
    for (const auto& name : spec.covariates) Z(i, c++) = z_value(*src, name);
  }
  return Z;
}

// Log-density of the composed error e = u + v with v ~ N(0, sv2) and
// u ~ N(mu, su2) truncated to [0, inf). Stable for standardized residuals
// out to |40| via the asymptotic log-CDF tail.
inline double composed_error_logdensity(double eps, double mu, double su2, double sv2) {
  const double s2 = su2 + sv2;
  const double sig = std::sqrt(s2);
  const double a = (eps - mu) / sig;
  const double sstar = std::sqrt(su2 * sv2 / s2);
  const double mustar = (sv2 * mu + su2 * eps) / s2;
  const double b = mustar / sstar;
  const double c = mu / std::sqrt(su2);
  const double ll = -0.5 * std::log(s2) - 0.5 * stats::kLog2Pi - 0.5 * a * a +
                    stats::log_norm_cdf(b) - stats::log_norm_cdf(c);
  // The density is bounded by the v-density peak; anything above that is
  // cancellation noise from extreme arguments and must not be trusted.
  if (ll > -0.5 * (stats::kLog2Pi + std::log(sv2)) + 1e-6)
    return std::numeric_limits<double>::quiet_NaN();
  return ll;
}

namespace detail {

struct ObsGrad {
  double ll;
  double d_eps;
  double d_mu;
  double d_su2;
  double d_sv2;
};

inline ObsGrad logdensity_grad(double eps, double mu, double su2, double sv2) {
  const double s2 = su2 + sv2;
  const double sig = std::sqrt(s2);
  const double a = (eps - mu) / sig;
  const double sstar = std::sqrt(su2 * sv2 / s2);
  const double mustar = (sv2 * mu + su2 * eps) / s2;
  const double b = mustar / sstar;
  const double su = std::sqrt(su2), sv = std::sqrt(sv2);
  const double c = mu / su;
  const double lb = stats::mills(b);
  const double lc = stats::mills(c);

  ObsGrad g;
  g.ll = composed_error_logdensity(eps, mu, su2, sv2);
  g.d_eps = -a / sig + lb * su / (sig * sv);
  g.d_mu = a / sig + lb * sv / (sig * su) - lc / su;

  const double s4 = s2 * s2;
  // d/d su2
  {
    const double dmustar = sv2 * (eps - mu) / s4;
    const double dsstar = sv2 * sv2 / (2.0 * sstar * s4);
    const double db = dmustar / sstar - b * dsstar / sstar;
    const double dc = -mu / (2.0 * su2 * su);
    g.d_su2 = -0.5 / s2 + 0.5 * a * a / s2 + lb * db - lc * dc;
  }
  // d/d sv2
  {
    const double dmustar = su2 * (mu - eps) / s4;
    const double dsstar = su2 * su2 / (2.0 * sstar * s4);
    const double db = dmustar / sstar - b * dsstar / sstar;
    g.d_sv2 = -0.5 / s2 + 0.5 * a * a / s2 + lb * db;
  }
  return g;
}

}  // namespace detail

// Row-aligned estimation data: frontier regressors (with intercept),
// normalized log cost, and inefficiency covariates.
struct SfaData {
  Eigen::MatrixXd Xa;  // n x (1 + p), leading column of ones
  Eigen::VectorXd y;
  Eigen::MatrixXd Z;   // n x q
  std::vector<std::string> bank_ids;
  std::vector<std::string> names;  // packed parameter names

  std::size_t n() const { return static_cast<std::size_t>(Xa.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(Xa.cols()); }
  std::size_t q() const { return static_cast<std::size_t>(Z.cols()); }
  std::size_t dim() const { return p() + q() + 2; }
};

inline SfaData make_sfa_data(const DesignMatrix& d, const Eigen::MatrixXd& Z,
                             const std::vector<std::string>& z_names = {}) {
  if (static_cast<std::size_t>(Z.rows()) != d.rows())
    throw Error("sfa: design and z not row-aligned");
  SfaData data;
  data.Xa.resize(d.X.rows(), d.X.cols() + 1);
  data.Xa.col(0).setOnes();
  data.Xa.rightCols(d.X.cols()) = d.X;
  data.y = d.y;
  data.Z = Z;
  data.bank_ids = d.bank_ids;
  data.names.push_back("const");
  for (const auto& t : d.terms) data.names.push_back(t.name);
  for (std::size_t j = 0; j < static_cast<std::size_t>(Z.cols()); ++j)
    data.names.push_back(j < z_names.size() ? z_names[j] : "z" + std::to_string(j));
  data.names.push_back("log_sigma_u2");
  data.names.push_back("log_sigma_v2");
  return data;
}

// theta = [beta (1+p), delta (q), log sigma_u^2, log sigma_v^2]
inline double loglikelihood(const Eigen::VectorXd& theta, const SfaData& data) {
  const std::size_t p = data.p(), q = data.q(), n = data.n();
  if (static_cast<std::size_t>(theta.size()) != data.dim())
    throw Error("sfa: theta dimension mismatch");
  const double su2 = std::exp(theta(p + q));
  const double sv2 = std::exp(theta(p + q + 1));
  const Eigen::VectorXd eps = data.y - data.Xa * theta.head(p);
  const Eigen::VectorXd mu = data.Z * theta.segment(p, q);
  // Fixed 1024-row blocks with pairwise reduction: the sum is independent
  // of any thread partition.
  std::vector<double> ll(n);
  for (std::size_t i = 0; i < n; ++i) {
    ll[i] = composed_error_logdensity(eps(i), mu(i), su2, sv2);
    if (!std::isfinite(ll[i])) throw NonFiniteLikelihood(i);
  }
  return stats::pairwise_sum(ll);
}

// Log-likelihood with analytic gradient; optionally accumulates per-bank
// score sums for the cluster sandwich.
inline double loglik_grad(const Eigen::VectorXd& theta, const SfaData& data,
                          Eigen::VectorXd& grad,
                          std::map<std::string, Eigen::VectorXd>* cluster_scores = nullptr) {
  const std::size_t p = data.p(), q = data.q(), n = data.n();
  const double su2 = std::exp(theta(p + q));
  const double sv2 = std::exp(theta(p + q + 1));
  const Eigen::VectorXd eps = data.y - data.Xa * theta.head(p);
  const Eigen::VectorXd mu = data.Z * theta.segment(p, q);

  grad = Eigen::VectorXd::Zero(theta.size());
  std::vector<double> ll(n);
  Eigen::VectorXd gi(theta.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = detail::logdensity_grad(eps(i), mu(i), su2, sv2);
    ll[i] = g.ll;
    if (!std::isfinite(g.ll)) throw NonFiniteLikelihood(i);
    gi.head(p) = -g.d_eps * data.Xa.row(i).transpose();
    gi.segment(p, q) = g.d_mu * data.Z.row(i).transpose();
    gi(p + q) = g.d_su2 * su2;
    gi(p + q + 1) = g.d_sv2 * sv2;
    grad += gi;
    if (cluster_scores) {
      auto [it, inserted] = cluster_scores->try_emplace(
          data.bank_ids[i], Eigen::VectorXd::Zero(theta.size()));
      it->second += gi;
    }
  }
  return stats::pairwise_sum(ll);
}

struct FitOptions {
  int starts = 5;
  std::uint64_t seed = 12345;
  int max_iterations = 500;
  double grad_tol = 1e-5;
  double rel_f_tol = 1e-9;
  bool half_normal = false;  // fixes delta = 0 (mu = 0)
};

struct SfaFit {
  Eigen::VectorXd beta;   // intercept first, then design columns
  Eigen::VectorXd delta;
  double sigma_u = 0, sigma_v = 0;
  double log_su2 = 0, log_sv2 = 0;
  double loglik = 0;
  bool converged = false;
  int iterations = 0;
  double score_norm_at_optimum = 0;
  Eigen::VectorXd cluster_se;  // aligned to packed [beta, delta, log variances]
  std::vector<std::string> names;

  Eigen::VectorXd packed() const {
    Eigen::VectorXd t(beta.size() + delta.size() + 2);
    t << beta, delta, log_su2, log_sv2;
    return t;
  }
};

struct EfficiencyScore {
  std::string bank_id;
  Quarter quarter;
  double ce = 0;     // E[exp(-u) | eps], in (0, 1]
  double u_hat = 0;  // E[u | eps]
};

namespace detail {

// Column standardization bookkeeping: fit on centered/scaled data, then map
// coefficients and their covariance back to the original scale.
struct Standardizer {
  Eigen::VectorXd x_mean, x_scale;  // design columns (excluding intercept)
  Eigen::VectorXd z_mean, z_scale;  // z columns (constant column untouched)
  bool z_has_const = false;

  Eigen::MatrixXd transform_matrix(std::size_t p, std::size_t q) const {
    // theta_orig = T * theta_std
    const std::size_t dim = 1 + p + q + 2;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(dim, dim);
    T(0, 0) = 1.0;
    for (std::size_t j = 0; j < p; ++j) {
      T(1 + j, 1 + j) = 1.0 / x_scale(j);
      T(0, 1 + j) = -x_mean(j) / x_scale(j);
    }
    for (std::size_t j = 0; j < q; ++j) {
      const std::size_t col = 1 + p + j;
      T(col, col) = 1.0 / z_scale(j);
      if (z_has_const && j > 0) T(1 + p, col) = -z_mean(j) / z_scale(j);
    }
    T(1 + p + q, 1 + p + q) = 1.0;
    T(1 + p + q + 1, 1 + p + q + 1) = 1.0;
    return T;
  }
};

inline Standardizer standardize(SfaData& data, bool z_has_const) {
  Standardizer s;
  s.z_has_const = z_has_const;
  const std::size_t p = data.p() - 1, q = data.q();
  s.x_mean.resize(p);
  s.x_scale.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    auto col = data.Xa.col(1 + j);
    const double m = col.mean();
    double sd = std::sqrt((col.array() - m).square().sum() /
                          std::max<double>(1.0, col.size() - 1));
    if (sd <= 0) throw RankDeficientDesign(data.names[1 + j]);
    s.x_mean(j) = m;
    s.x_scale(j) = sd;
    col = (col.array() - m) / sd;
  }
  s.z_mean = Eigen::VectorXd::Zero(q);
  s.z_scale = Eigen::VectorXd::Ones(q);
  for (std::size_t j = z_has_const ? 1 : 0; j < q; ++j) {
    auto col = data.Z.col(j);
    const double m = col.mean();
    double sd = std::sqrt((col.array() - m).square().sum() /
                          std::max<double>(1.0, col.size() - 1));
    if (sd <= 0) throw RankDeficientDesign(data.names[data.p() + j]);
    s.z_scale(j) = sd;
    if (z_has_const) {
      s.z_mean(j) = m;
      col = (col.array() - m) / sd;
    } else {
      col = col.array() / sd;
    }
  }
  return s;
}

}  // namespace detail

inline SfaFit fit_frontier(const SfaData& original, const FitOptions& opt = {},
                           bool z_has_const = true) {
  SfaData data = original;  // standardized working copy
  if (opt.half_normal) {
    data.Z = Eigen::MatrixXd::Zero(data.Xa.rows(), 0);
    z_has_const = false;
  }
  const std::size_t p = data.p() - 1, q = data.q();
  if (data.n() < data.dim() + 1) throw EstimationError("sfa: too few observations");
  const auto std_info = detail::standardize(data, z_has_const);

  auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) -> double {
    try {
      const double ll = loglik_grad(th, data, g);
      g = -g;
      return -ll;
    } catch (const NonFiniteLikelihood&) {
      g.setZero();
      return std::numeric_limits<double>::infinity();
    }
  };

  // OLS-based start.
  Eigen::VectorXd beta0 =
      data.Xa.colPivHouseholderQr().solve(data.y);
  const Eigen::VectorXd resid = data.y - data.Xa * beta0;
  const double rvar = std::max(1e-8, resid.squaredNorm() / std::max<double>(1, data.n()));
  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(data.dim());
  theta0.head(1 + p) = beta0;
  theta0(1 + p + q) = std::log(rvar);
  theta0(1 + p + q + 1) = std::log(0.25 * rvar);

  optim::Options oopt;
  oopt.max_iterations = opt.max_iterations;
  oopt.grad_tol = opt.grad_tol;
  oopt.rel_f_tol = opt.rel_f_tol;

  optim::Result best;
  best.f = std::numeric_limits<double>::infinity();
  stats::Rng rng(opt.seed);
  for (int s = 0; s < std::max(1, opt.starts); ++s) {
    Eigen::VectorXd start = theta0;
    if (s > 0)
      for (Eigen::Index j = 0; j < start.size(); ++j)
        start(j) += 0.3 * rng.normal();
    auto r = optim::minimize(objective, start, oopt);
    if (!std::isfinite(r.f)) continue;
    const bool tie = std::fabs(r.f - best.f) < 1e-7;
    if (r.f < best.f - 1e-7 || (tie && r.x.norm() < best.x.norm())) best = r;
  }
  if (!std::isfinite(best.f)) throw DidNotConverge("sfa: all starts failed");

  // Cluster sandwich in standardized space, then map back.
  Eigen::VectorXd g_at_opt(data.dim());
  std::map<std::string, Eigen::VectorXd> scores;
  loglik_grad(best.x, data, g_at_opt, &scores);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(data.dim(), data.dim());
  for (const auto& [bank, sg] : scores) B += sg * sg.transpose();
  auto grad_only = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
    try {
      loglik_grad(th, data, g);
      g = -g;
    } catch (const NonFiniteLikelihood&) {
      g.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  };
  const Eigen::MatrixXd A = optim::fd_hessian(grad_only, best.x, 1e-5);
  const Eigen::MatrixXd Ainv =
      A.completeOrthogonalDecomposition().pseudoInverse();
  Eigen::MatrixXd V = Ainv * B * Ainv;

  Eigen::MatrixXd T = std_info.transform_matrix(p, q);
  // The standardized theta layout matches the packed layout, so the map
  // applies directly.
  const Eigen::VectorXd theta_orig = T * best.x;
  V = T * V * T.transpose();

  SfaFit fit;
  fit.beta = theta_orig.head(1 + p);
  fit.delta = theta_orig.segment(1 + p, q);
  fit.log_su2 = theta_orig(1 + p + q);
  fit.log_sv2 = theta_orig(1 + p + q + 1);
  fit.sigma_u = std::exp(0.5 * fit.log_su2);
  fit.sigma_v = std::exp(0.5 * fit.log_sv2);
  fit.loglik = -best.f;
  fit.converged = best.converged;
  fit.iterations = best.iterations;
  fit.score_norm_at_optimum = g_at_opt.cwiseAbs().maxCoeff();
  fit.cluster_se = V.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.names = opt.half_normal ? std::vector<std::string>{} : original.names;
  if (opt.half_normal) {
    fit.names.assign(original.names.begin(), original.names.begin() + 1 + p);
    fit.names.push_back("log_sigma_u2");
    fit.names.push_back("log_sigma_v2");
  }
  return fit;
}

// Battese-Coelli point efficiency: CE = E[exp(-u) | eps].
inline std::vector<EfficiencyScore> efficiency_scores(const SfaFit& fit,
                                                      const SfaData& data,
                                                      std::span<const Quarter> quarters) {
  if (!fit.converged) throw NotConverged();
  const std::size_t n = data.n();
  const double su2 = std::exp(fit.log_su2), sv2 = std::exp(fit.log_sv2);
  const double s2 = su2 + sv2;
  const double sstar = std::sqrt(su2 * sv2 / s2);
  const Eigen::VectorXd eps = data.y - data.Xa * fit.beta;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  if (fit.delta.size() > 0) mu = data.Z * fit.delta;
  std::vector<EfficiencyScore> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mustar = (sv2 * mu(i) + su2 * eps(i)) / s2;
    const double b = mustar / sstar;
    EfficiencyScore s;
    s.bank_id = data.bank_ids[i];
    s.quarter = i < quarters.size() ? quarters[i] : Quarter{};
    const double log_ce = -mustar + 0.5 * sstar * sstar +
                          stats::log_norm_cdf(b - sstar) - stats::log_norm_cdf(b);
    s.ce = std::min(1.0, std::exp(log_ce));
    s.u_hat = mustar + sstar * stats::mills(b);
    out[i] = s;
  }
  return out;
}

}  // namespace fxeff::sfa
