// fxeff: pipeline driver for bank cost-efficiency estimation under FX
// revaluations. Subcommands: simulate, ingest, estimate, scores, twostage,
// copula, regress, report. One JSON config file with per-command sections;
// --seed/--out/--threads override the global section. Every run writes a
// manifest with the resolved config and digests of its input files.
//
// Exit codes: 0 success, 2 config/validation, 3 estimation non-convergence
// (partial fit saved where applicable), 4 I/O or data errors.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fxeff/copula.hpp"
#include "fxeff/panel.hpp"
#include "fxeff/panelreg.hpp"
#include "fxeff/serialize.hpp"
#include "fxeff/sfa.hpp"
#include "fxeff/synth.hpp"
#include "fxeff/translog.hpp"
#include "fxeff/twostage.hpp"

namespace fs = std::filesystem;
using namespace fxeff;
using ser::json;

namespace {

// ---- Config plumbing --------------------------------------------------------

struct Ctx {
  std::string out = ".";
  std::optional<std::uint64_t> seed;  // --seed / global.seed override
  int threads = 1;
  json config = json::object();
  std::map<std::string, std::string> inputs;  // path -> digest
};

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"global", {"seed", "out", "threads", "verbosity"}},
      {"simulate", {"banks", "quarters", "seed", "first_quarter", "sigma_u", "sigma_v"}},
      {"ingest",
       {"input", "schema", "min_quarters", "survivors_only", "ratio_lo",
        "ratio_hi", "growth_lo", "growth_hi"}},
      {"estimate", {"panel", "cost", "starts", "max_iterations", "seed"}},
      {"scores", {"panel", "starts", "max_iterations", "seed"}},
      {"twostage",
       {"panel", "ground_truth", "lags", "regressor", "fx_offset", "starts",
        "max_iterations", "seed"}},
      {"copula", {"kept", "dropped", "grid_size", "corner_eps", "per_quarter"}},
      {"regress",
       {"panel", "kept", "dropped", "zscore_window", "bootstrap",
        "bootstrap_replications", "seed"}},
      {"report",
       {"banks", "quarters", "seed", "starts", "max_iterations", "lags",
        "regressor", "grid_size", "corner_eps", "per_quarter", "zscore_window",
        "bootstrap", "bootstrap_replications", "include_twostage"}},
  };
  return keys;
}

void validate_config(const json& cfg) {
  if (!cfg.is_object()) throw ConfigError("config: top level must be a JSON object");
  for (const auto& [name, sec] : cfg.items()) {
    auto it = allowed_keys().find(name);
    if (it == allowed_keys().end())
      throw ConfigError("config: unknown section '" + name + "'");
    if (!sec.is_object())
      throw ConfigError("config: section '" + name + "' must be an object");
    for (const auto& [key, value] : sec.items())
      if (!it->second.count(key))
        throw ConfigError("config: unknown key '" + name + "." + key + "'");
  }
}

template <typename T>
T get_or(const json& sec, const std::string& key, T def) {
  if (!sec.contains(key)) return def;
  try {
    return sec.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: bad value for '" + key + "'");
  }
}

std::string require_path(const json& sec, const std::string& section,
                         const std::string& key) {
  if (!sec.contains(key))
    throw ConfigError("config: '" + section + "." + key + "' is required");
  return get_or<std::string>(sec, key, "");
}

std::string out_path(const Ctx& ctx, const std::string& name) {
  return (fs::path(ctx.out) / name).string();
}

void write_manifest(const Ctx& ctx, const std::string& command, const json& resolved) {
  json m;
  m["command"] = command;
  m["config"] = resolved;
  json in = json::object();
  for (const auto& [p, d] : ctx.inputs) in[p] = d;
  m["inputs"] = in;
  ser::write_json(out_path(ctx, command + "_manifest.json"), m);
}

// ---- Shared loaders -----------------------------------------------------------

std::vector<PanelObservation> load_panel(Ctx& ctx, const std::string& path) {
  ctx.inputs[path] = ser::digest_file(path);
  return ingest_panel_file(path).observations;
}

std::vector<sfa::EfficiencyScore> load_scores(Ctx& ctx, const std::string& path) {
  ctx.inputs[path] = ser::digest_file(path);
  return ser::read_scores_csv(path);
}

twostage::NerSeries ner_from_ground_truth(const synth::GroundTruth& gt) {
  twostage::NerSeries ner;
  ner.first = Quarter{gt.first_quarter.index - static_cast<int>(gt.pre_quarters)};
  ner.levels = gt.ner_levels;
  ner.weekly = gt.ner_weekly;
  if (gt.ner_levels.empty() || gt.ner_weekly.size() % gt.ner_levels.size() != 0)
    throw DataError("ground truth: weekly NER length not a multiple of the quarterly length");
  ner.weeks_per_quarter = static_cast<int>(gt.ner_weekly.size() / gt.ner_levels.size());
  return ner;
}

CostChoice parse_cost(const std::string& s) {
  if (s == "oc") return CostChoice::OC;
  if (s == "caoc") return CostChoice::CAOC;
  throw ConfigError("config: cost must be 'oc' or 'caoc'");
}

twostage::NerRegressor parse_regressor(const std::string& s) {
  if (s == "log_level") return twostage::NerRegressor::LogLevel;
  if (s == "garch_volatility") return twostage::NerRegressor::GarchVolatility;
  throw ConfigError("config: regressor must be 'log_level' or 'garch_volatility'");
}

sfa::FitOptions fit_options(const Ctx& ctx, const json& sec) {
  sfa::FitOptions opt;
  opt.starts = get_or<int>(sec, "starts", 5);
  opt.max_iterations = get_or<int>(sec, "max_iterations", 2000);
  opt.seed = ctx.seed.value_or(get_or<std::uint64_t>(sec, "seed", opt.seed));
  if (opt.starts < 1) throw ConfigError("config: starts must be >= 1");
  if (opt.max_iterations < 1) throw ConfigError("config: max_iterations must be >= 1");
  return opt;
}

json fit_options_json(const sfa::FitOptions& opt) {
  json j;
  j["starts"] = opt.starts;
  j["max_iterations"] = opt.max_iterations;
  j["seed"] = opt.seed;
  return j;
}

struct FrontierRun {
  DesignMatrix design;
  sfa::SfaData data;
  sfa::SfaFit fit;
};

FrontierRun fit_plain(std::span<const PanelObservation> rows, CostChoice choice,
                      const sfa::FitOptions& opt) {
  FrontierRun r;
  sfa::InefficiencySpec ineff;
  r.design = build_design(rows, FrontierSpec{}, choice);
  const Eigen::MatrixXd Z = sfa::build_z(rows, ineff);
  r.data = sfa::make_sfa_data(r.design, Z, ineff.column_names());
  r.fit = sfa::fit_frontier(r.data, opt);
  return r;
}

void write_scores_file(const Ctx& ctx, const std::string& name,
                       std::span<const sfa::EfficiencyScore> scores) {
  std::ofstream os(out_path(ctx, name), std::ios::binary);
  if (!os) throw DataError("cannot write " + out_path(ctx, name));
  ser::write_scores_csv(os, scores);
}

// ---- Commands -----------------------------------------------------------------

int cmd_simulate(Ctx& ctx, std::optional<std::size_t> banks_flag,
                 std::optional<std::size_t> quarters_flag) {
  const json sec = ctx.config.value("simulate", json::object());
  synth::SynthConfig cfg;
  cfg.n_banks = banks_flag.value_or(get_or<std::size_t>(sec, "banks", cfg.n_banks));
  cfg.n_quarters =
      quarters_flag.value_or(get_or<std::size_t>(sec, "quarters", cfg.n_quarters));
  cfg.first_quarter = Quarter::parse(
      get_or<std::string>(sec, "first_quarter", cfg.first_quarter.str()));
  cfg.sigma_u = get_or<double>(sec, "sigma_u", cfg.sigma_u);
  cfg.sigma_v = get_or<double>(sec, "sigma_v", cfg.sigma_v);
  cfg.seed = ctx.seed.value_or(get_or<std::uint64_t>(sec, "seed", cfg.seed));
  cfg.validate();

  auto [panel, gt] = synth::generate(cfg);
  {
    std::ofstream os(out_path(ctx, "panel.csv"), std::ios::binary);
    if (!os) throw DataError("cannot write " + out_path(ctx, "panel.csv"));
    write_panel_csv(os, panel);
  }
  ser::write_json(out_path(ctx, "ground_truth.json"), ser::ground_truth_json(gt));

  json resolved;
  resolved["banks"] = cfg.n_banks;
  resolved["quarters"] = cfg.n_quarters;
  resolved["first_quarter"] = cfg.first_quarter.str();
  resolved["sigma_u"] = cfg.sigma_u;
  resolved["sigma_v"] = cfg.sigma_v;
  resolved["seed"] = cfg.seed;
  resolved["out"] = ctx.out;
  write_manifest(ctx, "simulate", resolved);
  return 0;
}

int cmd_ingest(Ctx& ctx) {
  const json sec = ctx.config.value("ingest", json::object());
  const std::string input = require_path(sec, "ingest", "input");
  Schema schema;
  if (sec.contains("schema")) {
    if (!sec.at("schema").is_object())
      throw ConfigError("config: 'ingest.schema' must be an object");
    for (const auto& [k, v] : sec.at("schema").items())
      schema[k] = get_or<std::string>(sec.at("schema"), k, "");
  }
  CleaningConfig clean;
  clean.min_consecutive_quarters =
      get_or<std::size_t>(sec, "min_quarters", clean.min_consecutive_quarters);
  clean.survivors_only = get_or<bool>(sec, "survivors_only", clean.survivors_only);
  clean.ratio_lo = get_or<double>(sec, "ratio_lo", clean.ratio_lo);
  clean.ratio_hi = get_or<double>(sec, "ratio_hi", clean.ratio_hi);
  clean.growth_lo = get_or<double>(sec, "growth_lo", clean.growth_lo);
  clean.growth_hi = get_or<double>(sec, "growth_hi", clean.growth_hi);

  ctx.inputs[input] = ser::digest_file(input);
  const IngestResult ing = ingest_panel_file(input, schema);
  auto [panel, report] = clean_panel(ing.observations, clean);

  {
    std::ofstream os(out_path(ctx, "clean_panel.csv"), std::ios::binary);
    if (!os) throw DataError("cannot write " + out_path(ctx, "clean_panel.csv"));
    write_panel_csv(os, panel);
  }
  json rep;
  rep["rows_in"] = report.rows_in;
  rep["rows_out"] = report.rows_out;
  rep["rows_rejected_missing"] = ing.rows_rejected_missing;
  rep["banks_dropped_short_history"] = report.banks_dropped_short_history;
  rep["flagged_nonpositive_caoc"] = report.flagged_nonpositive_caoc;
  json wins = json::object();
  for (const auto& [col, n] : report.winsorized_cells) wins[col] = n;
  rep["winsorized_cells"] = wins;
  ser::write_json(out_path(ctx, "cleaning_report.json"), rep);

  json resolved;
  resolved["input"] = input;
  resolved["min_quarters"] = clean.min_consecutive_quarters;
  resolved["survivors_only"] = clean.survivors_only;
  resolved["ratio_lo"] = clean.ratio_lo;
  resolved["ratio_hi"] = clean.ratio_hi;
  resolved["growth_lo"] = clean.growth_lo;
  resolved["growth_hi"] = clean.growth_hi;
  resolved["out"] = ctx.out;
  write_manifest(ctx, "ingest", resolved);
  return 0;
}

int cmd_estimate(Ctx& ctx) {
  const json sec = ctx.config.value("estimate", json::object());
  const std::string panel_path = require_path(sec, "estimate", "panel");
  const std::string cost = get_or<std::string>(sec, "cost", "oc");
  const CostChoice choice = parse_cost(cost);
  const sfa::FitOptions opt = fit_options(ctx, sec);

  const auto panel = load_panel(ctx, panel_path);
  const auto rows = filter_positive_cost(panel, choice);
  const FrontierRun run = fit_plain(rows, choice, opt);
  ser::write_json(out_path(ctx, "fit_" + cost + ".json"), ser::fit_json(run.fit));

  json resolved = fit_options_json(opt);
  resolved["panel"] = panel_path;
  resolved["cost"] = cost;
  resolved["out"] = ctx.out;
  write_manifest(ctx, "estimate", resolved);

  if (!run.fit.converged) {
    std::cerr << "estimate: frontier did not converge; partial fit saved to fit_"
              << cost << ".json\n";
    return 3;
  }
  const auto scores = sfa::efficiency_scores(run.fit, run.data, run.design.quarters);
  write_scores_file(ctx, "scores_" + cost + ".csv", scores);
  return 0;
}

// One frontier fitted on the kept (OC) cost, then both cost measures scored
// against it, so the mechanical score ordering is visible per observation.
int cmd_scores(Ctx& ctx) {
  const json sec = ctx.config.value("scores", json::object());
  const std::string panel_path = require_path(sec, "scores", "panel");
  const sfa::FitOptions opt = fit_options(ctx, sec);

  const auto panel = load_panel(ctx, panel_path);
  // CAOC > 0 implies OC > 0, so this sample supports both measures.
  const auto rows = filter_positive_cost(panel, CostChoice::CAOC);
  const FrontierRun run = fit_plain(rows, CostChoice::OC, opt);
  ser::write_json(out_path(ctx, "fit_scores.json"), ser::fit_json(run.fit));

  json resolved = fit_options_json(opt);
  resolved["panel"] = panel_path;
  resolved["out"] = ctx.out;
  write_manifest(ctx, "scores", resolved);

  if (!run.fit.converged) {
    std::cerr << "scores: frontier did not converge; partial fit saved\n";
    return 3;
  }
  const auto oc_scores = sfa::efficiency_scores(run.fit, run.data, run.design.quarters);

  sfa::InefficiencySpec ineff;
  const DesignMatrix d2 = build_design(rows, FrontierSpec{}, CostChoice::CAOC);
  const sfa::SfaData data2 =
      sfa::make_sfa_data(d2, sfa::build_z(rows, ineff), ineff.column_names());
  const auto caoc_scores = sfa::efficiency_scores(run.fit, data2, d2.quarters);

  std::ofstream os(out_path(ctx, "scores_pair.csv"), std::ios::binary);
  if (!os) throw DataError("cannot write " + out_path(ctx, "scores_pair.csv"));
  csv::Writer w(os);
  w.row({"bank_id", "quarter", "revals_neg", "ce_oc", "ce_caoc"});
  for (std::size_t i = 0; i < rows.size(); ++i)
    w.row({rows[i].bank_id, rows[i].quarter.str(), csv::format(rows[i].revals_neg),
           csv::format(oc_scores[i].ce), csv::format(caoc_scores[i].ce)});
  return 0;
}

int cmd_twostage(Ctx& ctx) {
  const json sec = ctx.config.value("twostage", json::object());
  const std::string panel_path = require_path(sec, "twostage", "panel");
  const std::string gt_path = require_path(sec, "twostage", "ground_truth");

  twostage::TwoStageConfig cfg;
  cfg.lags = get_or<int>(sec, "lags", cfg.lags);
  cfg.regressor = parse_regressor(
      get_or<std::string>(sec, "regressor", "garch_volatility"));
  cfg.fx_offset = get_or<double>(sec, "fx_offset", cfg.fx_offset);
  cfg.fit = fit_options(ctx, sec);
  cfg.fit.max_iterations = get_or<int>(sec, "max_iterations", 2000);
  cfg.validate();

  const auto panel = load_panel(ctx, panel_path);
  ctx.inputs[gt_path] = ser::digest_file(gt_path);
  const synth::GroundTruth gt = ser::ground_truth_from_json(ser::read_json(gt_path));
  const twostage::NerSeries ner = ner_from_ground_truth(gt);

  const auto table = twostage::comparison_table(panel, ner, cfg);
  std::ofstream os(out_path(ctx, "comparison.csv"), std::ios::binary);
  if (!os) throw DataError("cannot write " + out_path(ctx, "comparison.csv"));
  ser::write_comparison_csv(os, table);

  json resolved = fit_options_json(cfg.fit);
  resolved["panel"] = panel_path;
  resolved["ground_truth"] = gt_path;
  resolved["lags"] = cfg.lags;
  resolved["regressor"] = get_or<std::string>(sec, "regressor", "garch_volatility");
  resolved["fx_offset"] = cfg.fx_offset;
  resolved["out"] = ctx.out;
  write_manifest(ctx, "twostage", resolved);
  return 0;
}

int cmd_copula(Ctx& ctx) {
  const json sec = ctx.config.value("copula", json::object());
  const std::string kept_path = require_path(sec, "copula", "kept");
  const std::string dropped_path = require_path(sec, "copula", "dropped");
  copula::DensityOptions opt;
  opt.grid_size = get_or<int>(sec, "grid_size", opt.grid_size);
  opt.corner_eps = get_or<double>(sec, "corner_eps", opt.corner_eps);
  opt.threads = ctx.threads;
  const bool per_quarter = get_or<bool>(sec, "per_quarter", true);

  const auto kept = load_scores(ctx, kept_path);
  const auto dropped = load_scores(ctx, dropped_path);
  std::map<std::pair<std::string, int>, double> dmap;
  for (const auto& s : dropped) dmap[{s.bank_id, s.quarter.index}] = s.ce;

  std::vector<double> a, b;
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_quarter;
  for (const auto& s : kept) {
    auto it = dmap.find({s.bank_id, s.quarter.index});
    if (it == dmap.end()) continue;
    a.push_back(s.ce);
    b.push_back(it->second);
    by_quarter[s.quarter.index].first.push_back(s.ce);
    by_quarter[s.quarter.index].second.push_back(it->second);
  }

  auto emit = [&](const std::string& tag, std::span<const double> x,
                  std::span<const double> y) {
    const auto d = copula::estimate_density(copula::to_pseudo(x, y), opt);
    std::ofstream os(out_path(ctx, "copula_density_" + tag + ".csv"), std::ios::binary);
    if (!os) throw DataError("cannot write copula density for " + tag);
    ser::write_density_csv(os, d);
    return ser::tail_json(d);
  };

  json tails;
  tails["pooled"] = emit("pooled", a, b);
  if (per_quarter) {
    json per = json::object();
    json skipped = json::array();
    for (const auto& [q, xy] : by_quarter) {
      const std::string tag = Quarter{q}.str();
      if (xy.first.size() < 10) {
        skipped.push_back(tag);
        continue;
      }
      per[tag] = emit(tag, xy.first, xy.second);
    }
    tails["quarters"] = per;
    tails["skipped_quarters"] = skipped;
  }
  ser::write_json(out_path(ctx, "copula_tails.json"), tails);

  json resolved;
  resolved["kept"] = kept_path;
  resolved["dropped"] = dropped_path;
  resolved["grid_size"] = opt.grid_size;
  resolved["corner_eps"] = opt.corner_eps;
  resolved["per_quarter"] = per_quarter;
  resolved["threads"] = ctx.threads;
  resolved["out"] = ctx.out;
  write_manifest(ctx, "copula", resolved);
  return 0;
}

std::string cut_name(reg::SampleCut c) {
  switch (c) {
    case reg::SampleCut::Full: return "full";
    case reg::SampleCut::DropLargest25: return "drop_largest25";
    case reg::SampleCut::DropSmallest25: return "drop_smallest25";
  }
  return "?";
}

void regress_core(Ctx& ctx, std::span<const PanelObservation> panel,
                  std::span<const sfa::EfficiencyScore> kept,
                  std::span<const sfa::EfficiencyScore> dropped,
                  int zscore_window, const reg::MarketStructureOptions& ms) {
  {
    std::ofstream os(out_path(ctx, "channels.csv"), std::ios::binary);
    if (!os) throw DataError("cannot write " + out_path(ctx, "channels.csv"));
    csv::Writer w(os);
    ser::write_regression_header(w);
    const auto fits = reg::channels_suite(panel);
    const std::vector<std::string> labels = {"ln_ta", "equity_ratio",
                                             "liquidity_ratio", "asset_growth_4q"};
    for (std::size_t i = 0; i < fits.size(); ++i)
      ser::write_regression_rows(w, "channels", labels[i], fits[i]);
  }
  {
    std::ofstream os(out_path(ctx, "stability.csv"), std::ios::binary);
    if (!os) throw DataError("cannot write " + out_path(ctx, "stability.csv"));
    csv::Writer w(os);
    ser::write_regression_header(w);
    for (const auto& r : reg::stability_suite(panel, zscore_window))
      ser::write_regression_rows(w, "stability", r.dependent + "/" + r.treatment, r.fit);
  }
  if (!kept.empty() && !dropped.empty()) {
    std::ofstream os(out_path(ctx, "market_structure.csv"), std::ios::binary);
    if (!os) throw DataError("cannot write " + out_path(ctx, "market_structure.csv"));
    csv::Writer w(os);
    ser::write_regression_header(w);
    for (const auto& r : reg::market_structure_suite(panel, dropped, kept, ms)) {
      const std::string model =
          r.market + "/" + r.scores + "/" + r.method + "/" + cut_name(r.cut);
      ser::write_regression_rows(w, "market_structure", model, r.fit);
      w.row({"market_structure", model, "[absolute_impact_pp]",
             csv::format(r.absolute_impact_pp), "0", "",
             std::to_string(r.fit.n_obs), r.fit.se_method});
    }
  }
}

int cmd_regress(Ctx& ctx) {
  const json sec = ctx.config.value("regress", json::object());
  const std::string panel_path = require_path(sec, "regress", "panel");
  const int zscore_window = get_or<int>(sec, "zscore_window", 4);
  reg::MarketStructureOptions ms;
  ms.bootstrap = get_or<bool>(sec, "bootstrap", ms.bootstrap);
  ms.bootstrap_replications =
      get_or<int>(sec, "bootstrap_replications", ms.bootstrap_replications);
  ms.seed = ctx.seed.value_or(get_or<std::uint64_t>(sec, "seed", ms.seed));

  const auto panel = load_panel(ctx, panel_path);
  std::vector<sfa::EfficiencyScore> kept, dropped;
  if (sec.contains("kept")) kept = load_scores(ctx, get_or<std::string>(sec, "kept", ""));
  if (sec.contains("dropped"))
    dropped = load_scores(ctx, get_or<std::string>(sec, "dropped", ""));
  regress_core(ctx, panel, kept, dropped, zscore_window, ms);

  json resolved;
  resolved["panel"] = panel_path;
  if (sec.contains("kept")) resolved["kept"] = get_or<std::string>(sec, "kept", "");
  if (sec.contains("dropped"))
    resolved["dropped"] = get_or<std::string>(sec, "dropped", "");
  resolved["zscore_window"] = zscore_window;
  resolved["bootstrap"] = ms.bootstrap;
  resolved["bootstrap_replications"] = ms.bootstrap_replications;
  resolved["seed"] = ms.seed;
  resolved["out"] = ctx.out;
  write_manifest(ctx, "regress", resolved);
  return 0;
}

// Full pipeline on one generated panel: simulate, fit both cost measures,
// same-frontier score pair, counterfactual comparison, copulas, regressions.
int cmd_report(Ctx& ctx, std::optional<std::size_t> banks_flag,
               std::optional<std::size_t> quarters_flag) {
  const json sec = ctx.config.value("report", json::object());
  synth::SynthConfig scfg;
  scfg.n_banks = banks_flag.value_or(get_or<std::size_t>(sec, "banks", scfg.n_banks));
  scfg.n_quarters =
      quarters_flag.value_or(get_or<std::size_t>(sec, "quarters", scfg.n_quarters));
  scfg.seed = ctx.seed.value_or(get_or<std::uint64_t>(sec, "seed", scfg.seed));
  scfg.validate();
  const sfa::FitOptions opt = fit_options(ctx, sec);
  const bool include_twostage = get_or<bool>(sec, "include_twostage", true);

  auto [panel, gt] = synth::generate(scfg);
  {
    std::ofstream os(out_path(ctx, "panel.csv"), std::ios::binary);
    if (!os) throw DataError("cannot write " + out_path(ctx, "panel.csv"));
    write_panel_csv(os, panel);
  }
  ser::write_json(out_path(ctx, "ground_truth.json"), ser::ground_truth_json(gt));

  json resolved = fit_options_json(opt);
  resolved["banks"] = scfg.n_banks;
  resolved["quarters"] = scfg.n_quarters;
  resolved["include_twostage"] = include_twostage;
  resolved["threads"] = ctx.threads;
  resolved["out"] = ctx.out;
  write_manifest(ctx, "report", resolved);

  // Kept (OC) and dropped (CAOC) frontiers with their own score files.
  const auto rows_oc = filter_positive_cost(panel, CostChoice::OC);
  const auto rows_ca = filter_positive_cost(panel, CostChoice::CAOC);
  const FrontierRun kept = fit_plain(rows_oc, CostChoice::OC, opt);
  const FrontierRun dropped = fit_plain(rows_ca, CostChoice::CAOC, opt);
  ser::write_json(out_path(ctx, "fit_oc.json"), ser::fit_json(kept.fit));
  ser::write_json(out_path(ctx, "fit_caoc.json"), ser::fit_json(dropped.fit));
  if (!kept.fit.converged || !dropped.fit.converged) {
    std::cerr << "report: frontier did not converge; partial fits saved\n";
    return 3;
  }
  const auto kept_scores =
      sfa::efficiency_scores(kept.fit, kept.data, kept.design.quarters);
  const auto dropped_scores =
      sfa::efficiency_scores(dropped.fit, dropped.data, dropped.design.quarters);
  write_scores_file(ctx, "scores_oc.csv", kept_scores);
  write_scores_file(ctx, "scores_caoc.csv", dropped_scores);

  // Same-frontier mechanical pair on the CAOC-positive sample.
  {
    sfa::InefficiencySpec ineff;
    const Eigen::MatrixXd Z = sfa::build_z(rows_ca, ineff);
    const DesignMatrix d_oc = build_design(rows_ca, FrontierSpec{}, CostChoice::OC);
    const DesignMatrix d_ca = build_design(rows_ca, FrontierSpec{}, CostChoice::CAOC);
    const auto s_oc = sfa::efficiency_scores(
        kept.fit, sfa::make_sfa_data(d_oc, Z, ineff.column_names()), d_oc.quarters);
    const auto s_ca = sfa::efficiency_scores(
        kept.fit, sfa::make_sfa_data(d_ca, Z, ineff.column_names()), d_ca.quarters);
    std::ofstream os(out_path(ctx, "scores_pair.csv"), std::ios::binary);
    if (!os) throw DataError("cannot write " + out_path(ctx, "scores_pair.csv"));
    csv::Writer w(os);
    w.row({"bank_id", "quarter", "revals_neg", "ce_oc", "ce_caoc"});
    for (std::size_t i = 0; i < rows_ca.size(); ++i)
      w.row({rows_ca[i].bank_id, rows_ca[i].quarter.str(),
             csv::format(rows_ca[i].revals_neg), csv::format(s_oc[i].ce),
             csv::format(s_ca[i].ce)});
  }

  if (include_twostage) {
    twostage::TwoStageConfig tcfg;
    tcfg.lags = get_or<int>(sec, "lags", tcfg.lags);
    tcfg.regressor = parse_regressor(
        get_or<std::string>(sec, "regressor", "garch_volatility"));
    tcfg.fit = opt;
    tcfg.fit.max_iterations = std::max(opt.max_iterations, 2000);
    const auto table =
        twostage::comparison_table(panel, ner_from_ground_truth(gt), tcfg);
    std::ofstream os(out_path(ctx, "comparison.csv"), std::ios::binary);
    if (!os) throw DataError("cannot write " + out_path(ctx, "comparison.csv"));
    ser::write_comparison_csv(os, table);
  }

  {
    copula::DensityOptions copt;
    copt.grid_size = get_or<int>(sec, "grid_size", copt.grid_size);
    copt.corner_eps = get_or<double>(sec, "corner_eps", copt.corner_eps);
    copt.threads = ctx.threads;
    std::map<std::pair<std::string, int>, double> dmap;
    for (const auto& s : dropped_scores) dmap[{s.bank_id, s.quarter.index}] = s.ce;
    std::vector<double> x, y;
    for (const auto& s : kept_scores) {
      auto it = dmap.find({s.bank_id, s.quarter.index});
      if (it == dmap.end()) continue;
      x.push_back(s.ce);
      y.push_back(it->second);
    }
    const auto d = copula::estimate_density(copula::to_pseudo(x, y), copt);
    std::ofstream os(out_path(ctx, "copula_density_pooled.csv"), std::ios::binary);
    if (!os) throw DataError("cannot write pooled copula density");
    ser::write_density_csv(os, d);
    json tails;
    tails["pooled"] = ser::tail_json(d);
    ser::write_json(out_path(ctx, "copula_tails.json"), tails);
  }

  reg::MarketStructureOptions ms;
  ms.bootstrap = get_or<bool>(sec, "bootstrap", ms.bootstrap);
  ms.bootstrap_replications =
      get_or<int>(sec, "bootstrap_replications", ms.bootstrap_replications);
  regress_core(ctx, panel, kept_scores, dropped_scores,
               get_or<int>(sec, "zscore_window", 4), ms);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bank cost-efficiency pipeline under FX revaluations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_flag;
  std::uint64_t seed_flag = 0;
  int threads_flag = 1;
  std::size_t banks_flag = 0, quarters_flag = 0;
  bool out_set = false, seed_set = false, threads_set = false, banks_set = false,
       quarters_set = false;

  const std::vector<std::string> names = {"simulate", "ingest",  "estimate",
                                          "scores",   "twostage", "copula",
                                          "regress",  "report"};
  for (const auto& name : names) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option_function<std::string>(
        "--config", [&](const std::string& v) { config_path = v; },
        "JSON config file with per-command sections");
    sub->add_option_function<std::string>(
        "--out", [&](const std::string& v) { out_flag = v; out_set = true; },
        "Output directory");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { seed_flag = v; seed_set = true; },
        "Seed override");
    sub->add_option_function<int>(
        "--threads", [&](int v) { threads_flag = v; threads_set = true; },
        "Worker threads");
    if (name == "simulate" || name == "report") {
      sub->add_option_function<std::size_t>(
          "--banks", [&](std::size_t v) { banks_flag = v; banks_set = true; },
          "Number of banks");
      sub->add_option_function<std::size_t>(
          "--quarters", [&](std::size_t v) { quarters_flag = v; quarters_set = true; },
          "Number of quarters");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Ctx ctx;
    if (!config_path.empty()) {
      ctx.config = ser::read_json(config_path);
      validate_config(ctx.config);
      ctx.inputs[config_path] = ser::digest_file(config_path);
    }
    const json g = ctx.config.value("global", json::object());
    ctx.out = out_set ? out_flag : get_or<std::string>(g, "out", ".");
    ctx.threads = threads_set ? threads_flag : get_or<int>(g, "threads", 1);
    if (ctx.threads < 1) throw ConfigError("config: threads must be >= 1");
    if (seed_set)
      ctx.seed = seed_flag;
    else if (g.contains("seed"))
      ctx.seed = get_or<std::uint64_t>(g, "seed", 0);
    (void)get_or<int>(g, "verbosity", 1);
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw DataError("cannot create output directory " + ctx.out);

    const auto banks = banks_set ? std::optional<std::size_t>(banks_flag) : std::nullopt;
    const auto quarters =
        quarters_set ? std::optional<std::size_t>(quarters_flag) : std::nullopt;

    if (app.got_subcommand("simulate")) return cmd_simulate(ctx, banks, quarters);
    if (app.got_subcommand("ingest")) return cmd_ingest(ctx);
    if (app.got_subcommand("estimate")) return cmd_estimate(ctx);
    if (app.got_subcommand("scores")) return cmd_scores(ctx);
    if (app.got_subcommand("twostage")) return cmd_twostage(ctx);
    if (app.got_subcommand("copula")) return cmd_copula(ctx);
    if (app.got_subcommand("regress")) return cmd_regress(ctx);
    if (app.got_subcommand("report")) return cmd_report(ctx, banks, quarters);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const EstimationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
