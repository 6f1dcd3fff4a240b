// Command line front end: fit models from CSV + config, compare nested
// models with likelihood ratio tests, emit GZT-correlograms, generate
// simulated datasets, and run the built-in diagnostic battery.
//
// Exit codes: 0 success, 1 usage or input parsing, 2 non-convergence,
// 3 internal numeric failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "gztreg/gztreg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageFailure("cannot open '" + path + "'");
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw gztreg::Error("cannot write '" + path.string() + "'");
  return out;
}

gztreg::ModelConfig load_config(const std::string& path) {
  std::ifstream in = open_input(path);
  return gztreg::model_config_from_kv(gztreg::parse_kv(in));
}

gztreg::GroupedDataset load_data(const std::string& path, const gztreg::ModelConfig& cfg) {
  std::ifstream in = open_input(path);
  return gztreg::dataset_from_csv(in, cfg);
}

// estimates.csv from a previous run, mapped back onto the current design
gztreg::ParameterVector init_from_estimates(const std::string& path,
                                            const gztreg::GroupedDataset& ds) {
  std::ifstream in = open_input(path);
  gztreg::CsvTable table = gztreg::read_csv(in);
  std::map<std::pair<std::string, std::string>, double> values;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    double est;
    if (!gztreg::detail::parse_double(table.rows[r][2], est))
      throw gztreg::ParseError("estimates: bad value", table.row_lines[r]);
    values[{table.rows[r][1], table.rows[r][0]}] = est;
  }
  auto lookup = [&](const std::string& block, const std::string& name) {
    auto it = values.find({block, name});
    if (it == values.end())
      throw gztreg::ParseError("estimates: no row for " + block + " coefficient '" + name + "'");
    return it->second;
  };
  gztreg::ParameterVector init = gztreg::ParameterVector::zeros(ds.p(), ds.d(), ds.q());
  for (int i = 0; i < ds.p(); ++i) init.beta(i) = lookup("mean", ds.mean_names[i]);
  for (int i = 0; i < ds.d(); ++i) init.alpha(i) = lookup("matlogcorr", ds.pair_names[i]);
  for (int i = 0; i < ds.q(); ++i) init.lambda(i) = lookup("logvariance", ds.variance_names[i]);
  return init;
}

int cmd_fit(const std::string& data_path, const std::string& config_path,
            const std::string& out_dir, std::optional<std::uint64_t> seed,
            std::optional<int> restarts, std::optional<int> max_iter,
            const std::string& init_path) {
  gztreg::ModelConfig cfg = load_config(config_path);
  if (seed) cfg.options.seed = *seed;
  if (restarts) cfg.options.restarts = *restarts;
  if (max_iter) cfg.options.max_iterations = *max_iter;
  gztreg::GroupedDataset ds = load_data(data_path, cfg);

  std::optional<gztreg::ParameterVector> init;
  if (!init_path.empty()) init = init_from_estimates(init_path, ds);

  gztreg::FitResult result = fit(ds, init, cfg.options);

  fs::create_directories(out_dir);
  {
    auto out = open_output(fs::path(out_dir) / "estimates.csv");
    gztreg::write_estimates_csv(out, result);
  }
  {
    auto out = open_output(fs::path(out_dir) / "trace.csv");
    gztreg::write_trace_csv(out, result);
  }
  {
    json summary;
    summary["loglik"] = result.loglik;
    summary["aic"] = gztreg::aic(result, result.n_groups);
    summary["bic"] = gztreg::bic(result, result.n_groups);
    summary["iterations"] = result.iterations;
    summary["converged"] = result.converged;
    summary["n_groups"] = result.n_groups;
    summary["n_obs"] = result.n_obs;
    summary["free_parameters"] = result.free_parameters;
    summary["p"] = result.mean_names.size();
    summary["d"] = result.pair_names.size();
    summary["q"] = result.variance_names.size();
    auto out = open_output(fs::path(out_dir) / "fit.json");
    out << summary.dump(2) << "\n";
  }
  std::cout << "loglik " << gztreg::format_full(result.loglik) << ", aic "
            << gztreg::format_full(gztreg::aic(result, result.n_groups)) << ", iterations "
            << result.iterations << ", converged " << (result.converged ? "yes" : "no") << "\n";
  return result.converged ? 0 : 2;
}

int cmd_lrt(const std::string& data_path, const std::string& full_path,
            const std::string& null_path, const std::string& out_dir) {
  gztreg::ModelConfig full_cfg = load_config(full_path);
  gztreg::ModelConfig null_cfg = load_config(null_path);
  gztreg::GroupedDataset full_ds = load_data(data_path, full_cfg);
  gztreg::GroupedDataset null_ds = load_data(data_path, null_cfg);
  gztreg::FitResult full = fit(full_ds, std::nullopt, full_cfg.options);
  gztreg::FitResult null = fit(null_ds, std::nullopt, null_cfg.options);
  if (!full.converged || !null.converged) {
    std::cerr << "lrt: a fit did not converge\n";
    return 2;
  }
  gztreg::LrtResult res = lrt(full, null);
  std::cout << "statistic " << gztreg::format_full(res.statistic) << ", df " << res.df << ", p "
            << gztreg::format_full(res.p_value) << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    json report;
    report["statistic"] = res.statistic;
    report["df"] = res.df;
    report["p_value"] = res.p_value;
    report["loglik_full"] = full.loglik;
    report["loglik_null"] = null.loglik;
    report["aic_full"] = gztreg::aic(full, full.n_groups);
    report["aic_null"] = gztreg::aic(null, null.n_groups);
    report["bic_full"] = gztreg::bic(full, full.n_groups);
    report["bic_null"] = gztreg::bic(null, null.n_groups);
    auto out = open_output(fs::path(out_dir) / "lrt.json");
    out << report.dump(2) << "\n";
  }
  return 0;
}

int cmd_correlogram(const std::string& data_path, const std::string& config_path,
                    const std::string& covariate, const std::string& strata_spec,
                    const std::string& out_dir) {
  gztreg::ModelConfig cfg = load_config(config_path);
  gztreg::GroupedDataset ds = load_data(data_path, cfg);
  gztreg::FitResult result = fit(ds, std::nullopt, cfg.options);
  if (!result.converged) {
    std::cerr << "correlogram: fit did not converge\n";
    return 2;
  }
  std::vector<std::pair<double, double>> strata;
  if (!strata_spec.empty()) {
    std::vector<double> cuts;
    std::stringstream ss(strata_spec);
    std::string item;
    while (std::getline(ss, item, ',')) cuts.push_back(std::stod(item));
    if (cuts.size() < 2) throw UsageFailure("--strata needs at least two cut points");
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      if (cuts[i + 1] <= cuts[i]) throw UsageFailure("--strata cut points must increase");
      strata.emplace_back(cuts[i], cuts[i + 1]);
    }
  }
  gztreg::CorrelogramTable table = gztreg::gzt_correlogram(ds, result, covariate, strata);
  fs::create_directories(out_dir);
  auto out = open_output(fs::path(out_dir) / "correlogram.csv");
  gztreg::write_correlogram_csv(out, table);
  for (const auto& s : table.strata)
    std::cout << "[" << s.lo << ", " << s.hi << "): mean " << s.mean << " over " << s.pair_count
              << " pairs\n";
  if (table.has_empty_stratum) std::cerr << "warning: at least one stratum has no pairs\n";
  return 0;
}

int cmd_simulate(const std::string& design_name, int n, std::uint64_t seed,
                 const std::string& error_kind, int t_df, const std::string& family_kind,
                 double rho, int m, const std::string& sizes_spec,
                 const std::string& variances_spec, const std::string& out_dir) {
  gztreg::SimDesign design;
  using Kind = gztreg::SimDesign::Kind;
  if (design_name == "study1")
    design.kind = Kind::study1;
  else if (design_name == "study2_case1")
    design.kind = Kind::study2_case1;
  else if (design_name == "study2_case2")
    design.kind = Kind::study2_case2;
  else if (design_name == "study2_case3")
    design.kind = Kind::study2_case3;
  else if (design_name == "study2_case4")
    design.kind = Kind::study2_case4;
  else if (design_name == "study3")
    design.kind = Kind::study3;
  else if (design_name == "family")
    design.kind = Kind::family;
  else if (design_name == "block")
    design.kind = Kind::block;
  else
    throw UsageFailure("unknown design '" + design_name + "'");
  design.n = n;
  design.seed = seed;
  if (error_kind == "gaussian")
    design.error_kind = gztreg::ErrorKind::gaussian;
  else if (error_kind == "t")
    design.error_kind = gztreg::ErrorKind::student_t;
  else
    throw UsageFailure("--error must be gaussian or t");
  design.t_df = t_df;
  design.family_kind = family_kind;
  design.rho = rho;
  design.m = m;
  if (!sizes_spec.empty()) {
    design.block_sizes.clear();
    std::stringstream ss(sizes_spec);
    std::string item;
    while (std::getline(ss, item, ',')) design.block_sizes.push_back(std::stoi(item));
  }
  if (!variances_spec.empty()) {
    design.variances.clear();
    std::stringstream ss(variances_spec);
    std::string item;
    while (std::getline(ss, item, ',')) design.variances.push_back(std::stod(item));
  }

  gztreg::Simulated sim = gztreg::generate(design);
  fs::create_directories(out_dir);
  {
    auto out = open_output(fs::path(out_dir) / "data.csv");
    gztreg::write_dataset_csv(out, sim.data);
  }
  {
    auto out = open_output(fs::path(out_dir) / "truth.cfg");
    gztreg::write_truth_kv(out, design_name, seed, sim.truth);
  }
  std::cout << "wrote " << sim.data.n_groups() << " groups, " << sim.data.n_obs()
            << " observations\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint mean / log-variance / matrix log-correlation regression"};
  app.require_subcommand(1);

  std::string data_path, config_path, out_dir = "out", init_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> restarts_override, max_iter_override;

  auto* fit_cmd = app.add_subcommand("fit", "fit a model from CSV data and a config file");
  fit_cmd->add_option("--data", data_path, "input CSV")->required();
  fit_cmd->add_option("--config", config_path, "model config file")->required();
  fit_cmd->add_option("--out", out_dir, "output directory");
  fit_cmd->add_option("--seed", seed_override, "override the config seed");
  fit_cmd->add_option("--restarts", restarts_override, "override restart count");
  fit_cmd->add_option("--max-iter", max_iter_override, "override iteration cap");
  fit_cmd->add_option("--init", init_path, "estimates.csv from a previous run");

  std::string full_path, null_path;
  auto* lrt_cmd = app.add_subcommand("lrt", "likelihood ratio test of nested configs");
  lrt_cmd->add_option("--data", data_path, "input CSV")->required();
  lrt_cmd->add_option("--full", full_path, "full-model config")->required();
  lrt_cmd->add_option("--null", null_path, "null-model config")->required();
  lrt_cmd->add_option("--out", out_dir, "output directory");

  std::string covariate, strata_spec;
  auto* corr_cmd = app.add_subcommand("correlogram", "stratified residual correlation table");
  corr_cmd->add_option("--data", data_path, "input CSV")->required();
  corr_cmd->add_option("--config", config_path, "model config file")->required();
  corr_cmd->add_option("--covariate", covariate, "numeric covariate to stratify")->required();
  corr_cmd->add_option("--strata", strata_spec, "comma-separated cut points (default quantiles)");
  corr_cmd->add_option("--out", out_dir, "output directory");

  std::string design_name = "study1", error_kind = "gaussian", family_kind = "ar1";
  std::string sizes_spec, variances_spec;
  int sim_n = 50, t_df = 3, family_m = 3;
  std::uint64_t sim_seed = 1;
  double rho = 0.5;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a dataset with a known truth");
  sim_cmd->add_option("--design", design_name,
                      "study1 | study2_case1..study2_case4 | study3 | family | block");
  sim_cmd->add_option("--n", sim_n, "number of groups");
  sim_cmd->add_option("--seed", sim_seed, "generator seed");
  sim_cmd->add_option("--error", error_kind, "gaussian | t");
  sim_cmd->add_option("--df", t_df, "degrees of freedom for t errors");
  sim_cmd->add_option("--family-kind", family_kind, "exchangeable | ar1 | banded");
  sim_cmd->add_option("--rho", rho, "family parameter");
  sim_cmd->add_option("--m", family_m, "family dimension");
  sim_cmd->add_option("--block-sizes", sizes_spec, "comma-separated block sizes");
  sim_cmd->add_option("--variances", variances_spec, "outer,block,residual variances");
  sim_cmd->add_option("--out", out_dir, "output directory");

  auto* check_cmd = app.add_subcommand("selfcheck", "run the embedded diagnostic battery");
  (void)check_cmd;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(fit_cmd))
      return cmd_fit(data_path, config_path, out_dir, seed_override, restarts_override,
                     max_iter_override, init_path);
    if (app.got_subcommand(lrt_cmd)) return cmd_lrt(data_path, full_path, null_path, out_dir);
    if (app.got_subcommand(corr_cmd))
      return cmd_correlogram(data_path, config_path, covariate, strata_spec, out_dir);
    if (app.got_subcommand(sim_cmd))
      return cmd_simulate(design_name, sim_n, sim_seed, error_kind, t_df, family_kind, rho,
                          family_m, sizes_spec, variances_spec, out_dir);
    return gztreg::run_selfcheck(std::cout) ? 0 : 3;
  } catch (const UsageFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gztreg::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gztreg::MissingCovariateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gztreg::InconsistentTypesError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gztreg::EmptyGroupError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gztreg::BadDesignError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gztreg::NotNestedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gztreg::NoConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const gztreg::Error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
