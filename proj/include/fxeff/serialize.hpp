#pragma once

// JSON/CSV serialization of fits, scores, ground truth and run manifests.
// Key order and number formatting are deterministic so identical runs emit
// byte-identical artifacts.

#include <fstream>
#include <json.hpp>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fxeff/copula.hpp"
#include "fxeff/csv.hpp"
#include "fxeff/error.hpp"
#include "fxeff/panelreg.hpp"
#include "fxeff/sfa.hpp"
#include "fxeff/synth.hpp"
#include "fxeff/twostage.hpp"

namespace fxeff::ser {

using json = nlohmann::ordered_json;

// ---- Digests ----------------------------------------------------------------

inline std::string fnv1a_hex(std::span<const char> bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for digest: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string s = ss.str();
  return fnv1a_hex(std::span<const char>(s.data(), s.size()));
}

// ---- Helpers ----------------------------------------------------------------

inline json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json vec_json(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

inline Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

// ---- Frontier fits and scores ----------------------------------------------

inline json fit_json(const sfa::SfaFit& fit) {
  json j;
  j["converged"] = fit.converged;
  j["loglik"] = fit.loglik;
  j["iterations"] = fit.iterations;
  j["score_norm"] = fit.score_norm_at_optimum;
  j["sigma_u"] = fit.sigma_u;
  j["sigma_v"] = fit.sigma_v;
  j["names"] = fit.names;
  j["beta"] = vec_json(fit.beta);
  j["delta"] = vec_json(fit.delta);
  j["log_sigma_u2"] = fit.log_su2;
  j["log_sigma_v2"] = fit.log_sv2;
  j["cluster_se"] = vec_json(fit.cluster_se);
  return j;
}

inline sfa::SfaFit fit_from_json(const json& j) {
  sfa::SfaFit fit;
  fit.converged = j.at("converged").get<bool>();
  fit.loglik = j.at("loglik").get<double>();
  fit.iterations = j.at("iterations").get<int>();
  fit.score_norm_at_optimum = j.at("score_norm").get<double>();
  fit.sigma_u = j.at("sigma_u").get<double>();
  fit.sigma_v = j.at("sigma_v").get<double>();
  fit.names = j.at("names").get<std::vector<std::string>>();
  fit.beta = vec_from_json(j.at("beta"));
  fit.delta = vec_from_json(j.at("delta"));
  fit.log_su2 = j.at("log_sigma_u2").get<double>();
  fit.log_sv2 = j.at("log_sigma_v2").get<double>();
  fit.cluster_se = vec_from_json(j.at("cluster_se"));
  return fit;
}

inline void write_scores_csv(std::ostream& os, std::span<const sfa::EfficiencyScore> scores) {
  csv::Writer w(os);
  w.row({"bank_id", "quarter", "ce", "u_hat"});
  for (const auto& s : scores)
    w.row({s.bank_id, s.quarter.str(), csv::format(s.ce), csv::format(s.u_hat)});
}

inline std::vector<sfa::EfficiencyScore> read_scores_csv(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  auto col = [&](const std::string& name) {
    auto idx = t.column(name);
    if (!idx) throw MissingColumn(name);
    return *idx;
  };
  const std::size_t cb = col("bank_id"), cq = col("quarter"), cc = col("ce"),
                    cu = col("u_hat");
  std::vector<sfa::EfficiencyScore> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    sfa::EfficiencyScore s;
    s.bank_id = t.rows[r][cb];
    s.quarter = Quarter::parse(t.rows[r][cq]);
    s.ce = csv::parse_double(t.rows[r][cc], r, "ce");
    s.u_hat = csv::parse_double(t.rows[r][cu], r, "u_hat");
    out.push_back(std::move(s));
  }
  return out;
}

// ---- Ground truth ------------------------------------------------------------

inline json ground_truth_json(const synth::GroundTruth& gt) {
  json j;
  j["first_quarter"] = gt.first_quarter.str();
  j["pre_quarters"] = gt.pre_quarters;
  j["sigma_u"] = gt.sigma_u;
  j["sigma_v"] = gt.sigma_v;
  j["gamma_market"] = gt.gamma_market;
  j["stability_beta"] = gt.stability_beta;
  j["stability_gamma1"] = gt.stability_gamma1;
  j["beta_names"] = gt.beta_names;
  j["beta"] = vec_json(gt.beta);
  j["delta_names"] = gt.delta_names;
  j["delta"] = vec_json(gt.delta);
  j["ner_levels"] = vec_json(gt.ner_levels);
  j["ner_weekly"] = vec_json(gt.ner_weekly);
  j["true_u"] = vec_json(gt.true_u);
  j["true_ce"] = vec_json(gt.true_ce);
  j["true_caoc"] = vec_json(gt.true_caoc);
  j["revals_neg"] = vec_json(gt.revals_neg);
  j["revals_pos"] = vec_json(gt.revals_pos);
  return j;
}

inline synth::GroundTruth ground_truth_from_json(const json& j) {
  synth::GroundTruth gt;
  gt.first_quarter = Quarter::parse(j.at("first_quarter").get<std::string>());
  gt.pre_quarters = j.at("pre_quarters").get<std::size_t>();
  gt.sigma_u = j.at("sigma_u").get<double>();
  gt.sigma_v = j.at("sigma_v").get<double>();
  gt.gamma_market = j.at("gamma_market").get<double>();
  gt.stability_beta = j.at("stability_beta").get<double>();
  gt.stability_gamma1 = j.at("stability_gamma1").get<double>();
  gt.beta_names = j.at("beta_names").get<std::vector<std::string>>();
  gt.beta = vec_from_json(j.at("beta"));
  gt.delta_names = j.at("delta_names").get<std::vector<std::string>>();
  gt.delta = vec_from_json(j.at("delta"));
  gt.ner_levels = j.at("ner_levels").get<std::vector<double>>();
  gt.ner_weekly = j.at("ner_weekly").get<std::vector<double>>();
  gt.true_u = j.at("true_u").get<std::vector<double>>();
  gt.true_ce = j.at("true_ce").get<std::vector<double>>();
  gt.true_caoc = j.at("true_caoc").get<std::vector<double>>();
  gt.revals_neg = j.at("revals_neg").get<std::vector<double>>();
  gt.revals_pos = j.at("revals_pos").get<std::vector<double>>();
  return gt;
}

// ---- Two-stage tables ----------------------------------------------------------

inline void write_comparison_csv(std::ostream& os,
                                 std::span<const twostage::ComparisonRow> rows) {
  csv::Writer w(os);
  w.row({"variant", "n_obs", "mean", "sd", "min", "max"});
  for (const auto& r : rows)
    w.row({r.label, std::to_string(r.n), csv::format(r.mean), csv::format(r.sd),
           csv::format(r.min), csv::format(r.max)});
}

// ---- Regression suites ----------------------------------------------------------

inline std::string stars(double estimate, double se) {
  if (!(se > 0)) return "";
  const double t = std::fabs(estimate / se);
  if (t >= 2.576) return "***";
  if (t >= 1.960) return "**";
  if (t >= 1.645) return "*";
  return "";
}

// Long format: one row per coefficient.
inline void write_regression_rows(csv::Writer& w, const std::string& suite,
                                  const std::string& model,
                                  const reg::RegressionFit& fit) {
  for (std::size_t j = 0; j < fit.names.size(); ++j) {
    const double b = fit.coef(static_cast<Eigen::Index>(j));
    const double s = fit.se(static_cast<Eigen::Index>(j));
    w.row({suite, model, fit.names[j], csv::format(b), csv::format(s),
           stars(b, s), std::to_string(fit.n_obs), fit.se_method});
  }
  for (const auto& t : fit.lincomb)
    w.row({suite, model, "[" + t.label + "]", csv::format(t.estimate),
           csv::format(t.se), stars(t.estimate, t.se), std::to_string(fit.n_obs),
           fit.se_method});
}

inline void write_regression_header(csv::Writer& w) {
  w.row({"suite", "model", "coefficient", "estimate", "se", "stars", "n_obs",
         "se_method"});
}

// ---- Copula -----------------------------------------------------------------

inline void write_density_csv(std::ostream& os, const copula::CopulaDensity& d) {
  csv::Writer w(os);
  w.row({"u", "v", "density"});
  for (int i = 0; i < d.grid_size; ++i)
    for (int j = 0; j < d.grid_size; ++j)
      w.row({csv::format(d.grid_coord(i)), csv::format(d.grid_coord(j)),
             csv::format(d.density(i, j))});
}

inline json tail_json(const copula::CopulaDensity& d) {
  const copula::TailReport r = copula::tail_report(d);
  json j;
  j["eps"] = r.eps;
  j["bandwidth_u"] = d.h_u;
  j["bandwidth_v"] = d.h_v;
  j["bandwidth_method"] = d.bandwidth_method;
  j["bandwidth_fallback"] = d.bandwidth_fallback;
  j["mass"]["low_low"] = r.mass.low_low;
  j["mass"]["high_low"] = r.mass.high_low;
  j["mass"]["low_high"] = r.mass.low_high;
  j["mass"]["high_high"] = r.mass.high_high;
  j["ratio"]["low_low"] = r.ratio_low_low;
  j["ratio"]["high_low"] = r.ratio_high_low;
  j["ratio"]["low_high"] = r.ratio_low_high;
  j["ratio"]["high_high"] = r.ratio_high_high;
  j["kept_low_dropped_high"] = r.kept_low_dropped_high;
  return j;
}

// ---- Files ------------------------------------------------------------------

inline void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << body;
  if (!out) throw DataError("write failed: " + path);
}

inline void write_json(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace fxeff::ser
