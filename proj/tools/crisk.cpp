// crisk: command-line driver for the competing-risks toolkit.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "crisk/catalog.hpp"
#include "crisk/cohort.hpp"
#include "crisk/error.hpp"
#include "crisk/forest.hpp"
#include "crisk/impute.hpp"
#include "crisk/io.hpp"
#include "crisk/pipeline.hpp"
#include "crisk/synth.hpp"
#include "crisk/weights.hpp"

using namespace crisk;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

void add_forest_options(CLI::App* app, forest::ForestConfig& f, std::string& split_rule) {
  app->add_option("--trees", f.n_trees, "Trees per forest")->capture_default_str();
  app->add_option("--mtry", f.mtry, "Predictors tried per node (0 = ceil(sqrt(M)))")->capture_default_str();
  app->add_option("--min-events", f.min_terminal_events, "Minimum dementia events per child node")->capture_default_str();
  app->add_option("--max-depth", f.max_depth, "Maximum tree depth (0 = unlimited)")->capture_default_str();
  app->add_option("--split-rule", split_rule, "subdistribution_logrank or causespecific_logrank")->capture_default_str();
  app->add_option("--horizon", f.vimp_horizon, "Error horizon age (default: 90th percentile of dementia ages)");
  app->add_option("--vimp-reps", f.vimp_repetitions, "Permutations per predictor")->capture_default_str();
  app->add_flag("!--unweighted-bootstrap", f.weighted_bootstrap, "Draw bootstrap samples ignoring analysis weights");
}

void add_impute_options(CLI::App* app, impute::ImputeConfig& c) {
  app->add_option("--iterations", c.iterations, "Imputation iterations")->capture_default_str();
  app->add_option("--impute-trees", c.trees_per_forest, "Trees per imputation forest")->capture_default_str();
  app->add_option("--impute-mtry", c.mtry, "Predictors per node (0 = floor(sqrt(p)))")->capture_default_str();
  app->add_option("--impute-min-node", c.min_node, "Minimum bootstrap draws per leaf")->capture_default_str();
  app->add_flag("--impute-weighted", c.use_weights, "Weight-proportional bootstrap in imputation");
}

std::vector<std::size_t> rows_for(const AnalysisTable& t, const std::string& stratum) {
  if (stratum.empty() || stratum == "all") {
    std::vector<std::size_t> rows(t.subjects.size());
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
  }
  return pipeline::stratum_rows(t, parse_stratum(stratum));
}

std::vector<std::size_t> predictors_for(const AnalysisTable& t, const std::string& stratum) {
  if (stratum.empty() || stratum == "all") {
    std::vector<std::size_t> cols(t.specs.size());
    std::iota(cols.begin(), cols.end(), 0);
    return cols;
  }
  return pipeline::stratum_predictors(t, parse_stratum(stratum));
}

Eigen::MatrixXd covariate_matrix(const AnalysisTable& t) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.subjects.size()), static_cast<Eigen::Index>(t.specs.size()));
  for (std::size_t i = 0; i < t.subjects.size(); ++i)
    for (std::size_t j = 0; j < t.specs.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.subjects[i].covariates[j];
  return m;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Competing-risks survival toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or INI file with option defaults");
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->capture_default_str();

  // cohort build
  auto* cohort_cmd = app.add_subcommand("cohort", "Cohort construction");
  cohort_cmd->require_subcommand(1);
  auto* build_cmd = cohort_cmd->add_subcommand("build", "Long interview records to an analysis table");
  std::string build_in, build_specs, build_out;
  cohort::BuildOptions build_opts;
  double min_age = 0.0;
  build_cmd->add_option("--in", build_in, "Subject-wave CSV")->required();
  build_cmd->add_option("--specs", build_specs, "Covariate specs JSON (default: built-in catalog)");
  build_cmd->add_option("--out", build_out, "Analysis CSV")->required();
  build_cmd->add_option("--missing-threshold", build_opts.missing_threshold, "Drop covariates at or above this missing fraction")
      ->capture_default_str();
  build_cmd->add_option("--min-baseline-age", min_age, "Keep subjects entering at or after this age");
  build_cmd->add_option("--keep", build_opts.keep_columns, "Extra columns carried through");

  // impute
  auto* impute_cmd = app.add_subcommand("impute", "Iterative random-forest imputation");
  std::string imp_in, imp_out;
  impute::ImputeConfig imp_cfg;
  impute_cmd->add_option("--in", imp_in, "Analysis CSV")->required();
  impute_cmd->add_option("--out", imp_out, "Imputed analysis CSV")->required();
  add_impute_options(impute_cmd, imp_cfg);

  // weights
  auto* weights_cmd = app.add_subcommand("weights", "Selection propensity and inverse-probability weights");
  std::string w_in, w_out, w_included;
  std::vector<std::string> w_features;
  double w_cap = 0.99;
  weights_cmd->add_option("--in", w_in, "Analysis CSV")->required();
  weights_cmd->add_option("--out", w_out, "Weighted CSV (selected subjects only)")->required();
  weights_cmd->add_option("--included", w_included, "Pass-through yes/no column marking the selected subsample")->required();
  weights_cmd->add_option("--features", w_features, "Covariates or pass-through numeric columns in the selection model");
  weights_cmd->add_option("--cap-quantile", w_cap, "Truncate weights at this quantile (>= 1 disables)")->capture_default_str();

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Single-predictor Fine-Gray or cause-specific sweep");
  std::string fit_in, fit_out, fit_model = "fine_gray", fit_stratum;
  fit_cmd->add_option("--in", fit_in, "Analysis CSV")->required();
  fit_cmd->add_option("--out", fit_out, "Fits CSV")->required();
  fit_cmd->add_option("--model", fit_model, "fine_gray or cause_specific")->capture_default_str();
  fit_cmd->add_option("--stratum", fit_stratum, "NHW-men, NHW-women, NHB-men, NHB-women or all")->required();

  // forest grow | vimp
  auto* forest_cmd = app.add_subcommand("forest", "Random survival forests");
  forest_cmd->require_subcommand(1);
  auto* grow_cmd = forest_cmd->add_subcommand("grow", "Grow and save a forest for one stratum");
  std::string grow_in, grow_out, grow_stratum, grow_split = "subdistribution_logrank";
  forest::ForestConfig grow_cfg;
  grow_cmd->add_option("--in", grow_in, "Analysis CSV (no missing covariates)")->required();
  grow_cmd->add_option("--stratum", grow_stratum, "Stratum label or all")->required();
  grow_cmd->add_option("--out", grow_out, "Forest file")->required();
  add_forest_options(grow_cmd, grow_cfg, grow_split);
  auto* vimp_cmd = forest_cmd->add_subcommand("vimp", "Permutation importance of a saved forest");
  std::string vimp_in, vimp_out;
  vimp_cmd->add_option("--forest", vimp_in, "Forest file")->required();
  vimp_cmd->add_option("--out", vimp_out, "Importance CSV")->required();

  // rank
  auto* rank_cmd = app.add_subcommand("rank", "Aggregate per-stratum importance ranks");
  std::vector<std::string> rank_in, rank_allow;
  std::string rank_out, rank_missing = "worst";
  rank_cmd->add_option("--vimp", rank_in, "Importance CSVs, one per stratum")->required();
  rank_cmd->add_option("--out", rank_out, "Overall ranks CSV")->required();
  rank_cmd->add_option("--allow-missing", rank_allow, "Predictors that may be absent from some strata");
  rank_cmd->add_option("--missing-rank", rank_missing, "worst or mean_available")
      ->check(CLI::IsMember({"worst", "mean_available"}))
      ->capture_default_str();

  // describe
  auto* describe_cmd = app.add_subcommand("describe", "Weighted descriptives per stratum");
  std::string desc_in, desc_out;
  describe_cmd->add_option("--in", desc_in, "Analysis CSV")->required();
  describe_cmd->add_option("--out", desc_out, "Descriptives CSV")->required();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Synthetic cohort with known hazards");
  pipeline::SynthConfig sc;
  std::string synth_out, synth_long;
  synth_cmd->add_option("--out", synth_out, "Analysis CSV")->required();
  synth_cmd->add_option("--long", synth_long, "Also write subject-wave records here");
  synth_cmd->add_option("--n", sc.n, "Subjects")->capture_default_str();
  synth_cmd->add_option("--predictors", sc.n_predictors, "Covariates")->capture_default_str();
  synth_cmd->add_option("--binary", sc.n_binary, "Leading +-1 covariates")->capture_default_str();
  synth_cmd->add_option("--dementia-rate", sc.dementia.rate, "Dementia baseline rate")->capture_default_str();
  synth_cmd->add_option("--dementia-shape", sc.dementia.shape, "Dementia Weibull shape")->capture_default_str();
  synth_cmd->add_option("--death-rate", sc.death.rate, "Death baseline rate")->capture_default_str();
  synth_cmd->add_option("--death-shape", sc.death.shape, "Death Weibull shape")->capture_default_str();
  synth_cmd->add_option("--beta-dementia", sc.beta_dementia, "Dementia log-hazard coefficients");
  synth_cmd->add_option("--beta-death", sc.beta_death, "Death log-hazard coefficients");
  synth_cmd->add_option("--censoring-rate", sc.censoring_rate, "Censoring hazard per year")->capture_default_str();
  synth_cmd->add_option("--max-followup", sc.max_followup, "Administrative censoring after this many years");
  synth_cmd->add_option("--entry-min", sc.entry_min, "Youngest entry age")->capture_default_str();
  synth_cmd->add_option("--entry-max", sc.entry_max, "Oldest entry age")->capture_default_str();
  synth_cmd->add_option("--max-household", sc.max_household, "Largest household")->capture_default_str();
  synth_cmd->add_option("--weight-sigma", sc.weight_sigma, "Lognormal weight spread")->capture_default_str();
  synth_cmd->add_option("--missing-rate", sc.missing_rate, "MCAR rate per covariate cell")->capture_default_str();

  // run-all
  auto* run_cmd = app.add_subcommand("run-all", "Every stratum end to end, tables and manifest");
  std::string run_in, run_dir, run_split = "subdistribution_logrank", run_missing = "worst";
  pipeline::RunConfig rc;
  bool no_forest = false;
  run_cmd->add_option("--in", run_in, "Analysis CSV")->required();
  run_cmd->add_option("--out-dir", run_dir, "Output directory")->required();
  run_cmd->add_option("--missing-rank", run_missing, "worst or mean_available")
      ->check(CLI::IsMember({"worst", "mean_available"}))
      ->capture_default_str();
  run_cmd->add_flag("--no-forest", no_forest, "Skip forests and ranking");
  add_forest_options(run_cmd, rc.forest, run_split);
  add_impute_options(run_cmd, rc.impute);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build_cmd) {
      auto specs = build_specs.empty() ? risk_factor_catalog() : read_specs(build_specs);
      if (min_age > 0.0) build_opts.min_baseline_age = min_age;
      cohort::BuildReport report;
      const auto table = cohort::build_cohort(read_csv(build_in), specs, build_opts, &report);
      write_analysis(build_out, table, report.excluded);
      print_warnings(report.warnings);
      std::cout << fmt::format("{} subjects, {} covariates kept, {} excluded, {} dropped\n", table.subjects.size(),
                               table.specs.size(), report.excluded.size(), report.dropped_subjects);
    } else if (*impute_cmd) {
      auto table = read_analysis(imp_in);
      imp_cfg.seed = g.seed;
      imp_cfg.threads = g.threads;
      const auto res = impute::impute(covariate_matrix(table), table.specs, imp_cfg);
      for (std::size_t i = 0; i < table.subjects.size(); ++i)
        for (std::size_t j = 0; j < table.specs.size(); ++j)
          table.subjects[i].covariates[j] = res.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      write_analysis(imp_out, table);
      for (std::size_t k = 0; k < res.per_iteration_change.size(); ++k) {
        std::cout << fmt::format("iteration {}: continuous change {:.6g}, binary flips {:.6g}\n", k + 1,
                                 res.per_iteration_change[k], res.per_iteration_binary_change[k]);
      }
    } else if (*weights_cmd) {
      auto table = read_analysis(w_in);
      const auto n = table.subjects.size();
      auto extra_index = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t k = 0; k < table.extra_columns.size(); ++k)
          if (table.extra_columns[k] == name) return k;
        return std::nullopt;
      };
      const auto inc = extra_index(w_included);
      if (!inc) throw Error(ErrorCode::InvalidArgument, "no pass-through column '" + w_included + "'");
      std::vector<bool> included(n);
      std::vector<double> base(n);
      for (std::size_t i = 0; i < n; ++i) {
        included[i] = cohort::parse_flag(table.subjects[i].extras[*inc]).value_or(false);
        base[i] = table.subjects[i].base_weight;
      }
      Eigen::MatrixXd feats(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(w_features.size()));
      for (std::size_t f = 0; f < w_features.size(); ++f) {
        const auto cov = table.covariate_index(w_features[f]);
        const auto ext = extra_index(w_features[f]);
        if (!cov && !ext) throw Error(ErrorCode::InvalidArgument, "unknown feature '" + w_features[f] + "'");
        for (std::size_t i = 0; i < n; ++i) {
          feats(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) =
              cov ? table.subjects[i].covariates[*cov] : parse_double(table.subjects[i].extras[*ext]);
        }
      }
      const auto model = weights::fit_propensity(feats, included, base);
      const auto ipw = weights::compute_ipw(model, base, w_cap);
      AnalysisTable out = table;
      out.subjects.clear();
      for (std::size_t i = 0; i < n; ++i) {
        if (!included[i]) continue;
        auto s = table.subjects[i];
        s.analysis_weight = ipw[i];
        out.subjects.push_back(std::move(s));
      }
      write_analysis(w_out, out);
      std::cout << fmt::format("{} of {} subjects selected; logit converged in {} iterations\n", out.subjects.size(), n,
                               model.iterations_used);
    } else if (*fit_cmd) {
      const auto table = read_analysis(fit_in);
      const auto fits = pipeline::run_sweep(table, rows_for(table, fit_stratum), predictors_for(table, fit_stratum),
                                            pipeline::parse_model_kind(fit_model), g.threads);
      write_csv(fit_out, pipeline::fits_csv(fit_stratum, fits));
      for (const auto& f : fits)
        if (!f.ok()) std::cerr << "warning: " << f.predictor << ": " << f.message << '\n';
    } else if (*grow_cmd) {
      const auto table = read_analysis(grow_in);
      grow_cfg.seed = g.seed;
      grow_cfg.threads = g.threads;
      grow_cfg.split_rule = forest::parse_split_rule(grow_split);
      const auto f = forest::grow_forest(
          forest::make_forest_data(table, rows_for(table, grow_stratum), predictors_for(table, grow_stratum), grow_stratum),
          grow_cfg);
      forest::save_forest(grow_out, f);
      std::cout << fmt::format("{} trees, horizon {:.4g}\n", f.trees.size(), f.horizon);
    } else if (*vimp_cmd) {
      auto f = forest::load_forest(vimp_in);
      f.config.threads = g.threads;
      std::vector<std::string> warnings;
      const double err = forest::oob_error(f, &warnings);
      print_warnings(warnings);
      write_csv(vimp_out, pipeline::vimp_csv(forest::vimp(f)));
      std::cout << fmt::format("OOB error {:.6f}\n", err);
    } else if (*rank_cmd) {
      std::vector<forest::VimpTable> tables;
      for (const auto& p : rank_in) tables.push_back(pipeline::parse_vimp_csv(read_csv(p)));
      const auto mode = rank_missing == "worst" ? pipeline::MissingRank::worst : pipeline::MissingRank::mean_available;
      write_csv(rank_out, pipeline::ranks_csv(pipeline::rank_aggregate(tables, rank_allow, mode)));
    } else if (*describe_cmd) {
      const auto table = read_analysis(desc_in);
      std::vector<pipeline::DescriptiveRow> rows = pipeline::describe(table, rows_for(table, "all"), "all");
      for (auto s : kAllStrata) {
        const auto r = pipeline::describe(table, pipeline::stratum_rows(table, s), std::string(to_string(s)));
        rows.insert(rows.end(), r.begin(), r.end());
      }
      write_csv(desc_out, pipeline::descriptives_csv(rows));
    } else if (*synth_cmd) {
      sc.seed = g.seed;
      const auto cohort = pipeline::synth_cohort(sc);
      write_analysis(synth_out, cohort.table);
      if (!synth_long.empty()) {
        write_csv(synth_long, pipeline::synth_long_format(cohort));
        nlohmann::json specs = nlohmann::json::array();
        for (const auto& s : cohort.table.specs) specs.push_back(spec_to_json(s));
        write_json(manifest_path(synth_long), specs);
      }
    } else if (*run_cmd) {
      rc.seed = g.seed;
      rc.threads = g.threads;
      rc.run_forest = !no_forest;
      rc.forest.split_rule = forest::parse_split_rule(run_split);
      rc.missing_rank = run_missing == "worst" ? pipeline::MissingRank::worst : pipeline::MissingRank::mean_available;
      const auto result = pipeline::run_all(read_analysis(run_in), rc);
      pipeline::emit(run_dir, result, rc);
      print_warnings(result.warnings);
      for (const auto& r : result.reports) {
        std::cout << fmt::format("{}: n={} events={} {}\n", r.stratum, r.n, r.n_events, r.complete ? "ok" : "INCOMPLETE");
        print_warnings(r.warnings);
      }
      return result.all_complete() ? 0 : 3;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
