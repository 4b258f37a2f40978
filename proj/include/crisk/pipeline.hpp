#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "crisk/cohort.hpp"
#include "crisk/csv.hpp"
#include "crisk/forest.hpp"
#include "crisk/impute.hpp"
#include "crisk/survival.hpp"

namespace crisk::pipeline {

std::vector<std::size_t> stratum_rows(const AnalysisTable& table, Stratum stratum);

/// Predictor columns used in a stratum: every spec, minus female-only ones for men.
std::vector<std::size_t> stratum_predictors(const AnalysisTable& table, Stratum stratum);

struct DescriptiveRow {
  std::string group;
  std::string variable;
  bool binary = false;
  double estimate = kMissing;  // weighted mean, or weighted proportion on the 0/1 scale
  double se = kMissing;        // linearized, households as clusters
  std::size_t n = 0;           // non-missing subjects
};

/// Baseline Age, Female, NH Black, then one row per covariate, using analysis weights.
std::vector<DescriptiveRow> describe(const AnalysisTable& table, std::span<const std::size_t> rows,
                                     const std::string& group);

/// Weighted mean and its cluster-linearized SE: with z_i = w_i (x_i - m) / W summed
/// within clusters to Z_h, var = H/(H-1) sum_h Z_h^2. NaN entries are skipped.
std::pair<double, double> weighted_mean_se(std::span<const double> x, std::span<const double> w,
                                           std::span<const std::size_t> cluster);

/// Weighted Pearson matrix over pairwise-complete rows. Entries involving a column with
/// zero variance are NaN. Throws EmptySample when fewer than two rows are given.
Eigen::MatrixXd correlations(const AnalysisTable& table, std::span<const std::size_t> rows,
                             std::span<const std::size_t> columns);

enum class ModelKind { fine_gray, cause_specific };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view text);

struct PredictorFit {
  std::string predictor;
  std::string domain;
  ModelKind model = ModelKind::fine_gray;
  std::string status = "ok";  // or the error code name
  std::string message;
  survival::FitResult fit;

  bool ok() const noexcept { return status == "ok"; }
};

/// One single-predictor model per column in `predictors`. Failures are recorded per
/// predictor; the sweep itself does not throw on them.
std::vector<PredictorFit> run_sweep(const AnalysisTable& table, std::span<const std::size_t> rows,
                                    std::span<const std::size_t> predictors, ModelKind model, unsigned threads = 1);

enum class MissingRank { worst, mean_available };

struct RankRow {
  std::string predictor;
  std::string domain;
  std::vector<std::optional<std::size_t>> ranks;  // one per input table
  double mean_rank = 0.0;
  std::size_t overall = 0;
  bool partial = false;  // absent from at least one table
};

struct OverallRanking {
  std::vector<std::string> strata;
  std::vector<RankRow> rows;  // ascending mean rank
};

/// Unweighted mean of per-stratum ranks. Predictors absent from a table take rank M (the
/// size of the predictor union) or, with mean_available, are averaged over the tables
/// that have them. Ties: best single rank, then name. Throws InconsistentPredictorSets
/// when a predictor outside `allowed_missing` is absent somewhere.
OverallRanking rank_aggregate(std::span<const forest::VimpTable> tables,
                              std::span<const std::string> allowed_missing = {},
                              MissingRank missing = MissingRank::worst);

struct StratumReport {
  std::string stratum;
  std::size_t n = 0;
  std::size_t n_events = 0;
  std::vector<std::string> predictors;
  std::vector<PredictorFit> fits;
  std::optional<forest::VimpTable> vimp;
  double oob_error = kMissing;
  std::vector<DescriptiveRow> descriptives;
  Eigen::MatrixXd correlations;
  std::vector<std::string> warnings;
  bool complete = false;
};

struct RunConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  impute::ImputeConfig impute;
  forest::ForestConfig forest;
  MissingRank missing_rank = MissingRank::worst;
  bool run_forest = true;
};

nlohmann::json to_json(const RunConfig& cfg);

struct RunResult {
  std::vector<StratumReport> reports;  // one per stratum, fixed order
  std::optional<OverallRanking> ranking;
  std::vector<std::string> warnings;
  bool imputed = false;

  bool all_complete() const;
};

/// Pooled imputation when any covariate is missing, then per stratum: descriptives,
/// correlations, Fine-Gray and cause-specific sweeps, forest and importance; finally
/// the cross-stratum ranking.
RunResult run_all(AnalysisTable table, const RunConfig& cfg);

CsvTable fits_csv(const std::string& stratum, std::span<const PredictorFit> fits);
/// Inverse of fits_csv; messages and fit warnings are not stored. Failed fits keep
/// their status and empty numeric cells.
std::vector<PredictorFit> parse_fits_csv(const CsvTable& csv);
CsvTable vimp_csv(const forest::VimpTable& table);
forest::VimpTable parse_vimp_csv(const CsvTable& csv);
CsvTable ranks_csv(const OverallRanking& ranking);
CsvTable descriptives_csv(std::span<const DescriptiveRow> rows);
CsvTable correlations_csv(std::span<const std::string> names, const Eigen::MatrixXd& r);

std::uint64_t fnv1a(std::string_view bytes) noexcept;

/// Writes every table of `result` under `dir` plus manifest.json.
void emit(const std::string& dir, const RunResult& result, const RunConfig& cfg);

}  // namespace crisk::pipeline
