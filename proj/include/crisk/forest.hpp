#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "crisk/cohort.hpp"
#include "crisk/rng.hpp"
#include "crisk/survival.hpp"

namespace crisk::forest {

enum class SplitRule { subdistribution_logrank, causespecific_logrank };

std::string_view to_string(SplitRule rule) noexcept;
SplitRule parse_split_rule(std::string_view text);

struct ForestConfig {
  std::size_t n_trees = 1000;
  std::size_t mtry = 0;  // 0 = ceil(sqrt(M))
  std::size_t min_terminal_events = 3;
  std::size_t max_depth = 0;  // 0 = unlimited
  std::uint64_t seed = 1;
  SplitRule split_rule = SplitRule::subdistribution_logrank;
  double vimp_horizon = std::numeric_limits<double>::quiet_NaN();  // NaN = 90th percentile of dementia ages
  bool weighted_bootstrap = true;
  std::size_t vimp_repetitions = 1;
  unsigned threads = 1;

  std::size_t resolved_mtry(std::size_t n_predictors) const;
};

/// Training data for one stratum: covariates n x M plus outcomes. The censoring curve
/// feeds the subdistribution split weights.
struct ForestData {
  Eigen::MatrixXd x;
  std::vector<double> entry, exit, weight;
  std::vector<EventKind> event;
  std::vector<std::string> names;
  std::vector<std::string> domains;
  std::string stratum;
  survival::SurvCurve censoring;

  std::size_t size() const noexcept { return entry.size(); }
  std::size_t n_predictors() const noexcept { return static_cast<std::size_t>(x.cols()); }

  /// Fills `censoring`; call after the outcome vectors are set.
  void prepare();
};

/// Subjects and the covariate columns (all retained specs unless `predictors` is given).
ForestData make_forest_data(const AnalysisTable& table, std::span<const std::size_t> rows,
                            std::span<const std::size_t> predictors, std::string stratum);

struct TerminalCif {
  std::vector<double> ages;
  std::vector<double> dementia, death;
  double at_horizon = 0.0;  // dementia CIF at the forest horizon

  double value_at(EventKind cause, double age) const;
};

struct SurvNode {
  std::int32_t feature = -1;  // -1 for a terminal node
  double threshold = 0.0;     // left child takes x <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t terminal = -1;
};

struct SurvTree {
  std::vector<SurvNode> nodes;
  std::vector<TerminalCif> terminals;
  std::vector<std::uint32_t> inbag;  // multiplicity per training subject

  /// Terminal reached by row `row` of `x`; `override_column` / `override_value` swap in
  /// one covariate value (used for permutation importance).
  std::size_t drop(const Eigen::MatrixXd& x, Eigen::Index row, std::int32_t override_column = -1,
                   double override_value = 0.0) const;
  std::size_t drop(std::span<const double> x) const;
  bool splits_on(std::size_t feature) const;
};

/// n draws with replacement, weight-proportional when `weights` is nonempty.
std::vector<std::uint32_t> draw_bootstrap(std::size_t n, std::span<const double> weights, Rng& rng);

/// Terminal CIFs are evaluated at `horizon` for the cached at_horizon values. Throws
/// EmptySample.
SurvTree grow_tree(const ForestData& data, std::span<const std::uint32_t> inbag, const ForestConfig& cfg, Rng& rng,
                   double horizon);

struct Forest {
  ForestConfig config;
  double horizon = 0.0;
  ForestData data;
  std::vector<SurvTree> trees;
  std::vector<std::string> warnings;
};

/// Default error horizon: type-7 90th percentile of the dementia event ages.
double default_horizon(const ForestData& data);

/// Throws NoEvents, EmptySample.
Forest grow_forest(ForestData data, const ForestConfig& cfg);

/// Ensemble CIF on the union grid of the reached terminal ages. Throws DimensionMismatch.
survival::CifCurve predict_cif(const Forest& forest, std::span<const double> x);

/// Weighted truncated concordance for the primary cause: a pair (i, j) is usable when
/// i has dementia at t_i <= horizon and j is still under observation after t_i
/// (entry_j < t_i < exit_j). Pairs weigh w_i * w_j; score ties count one half.
/// Throws NoUsablePairs.
double concordance(std::span<const double> scores, std::span<const double> entry, std::span<const double> exit,
                   std::span<const EventKind> event, std::span<const double> weight, double horizon,
                   std::span<const std::uint8_t> use = {});

struct OobScores {
  std::vector<double> score;  // ensemble OOB dementia CIF at the horizon
  std::vector<std::uint8_t> usable;  // 0 when a subject is in-bag for every tree
};

OobScores oob_scores(const Forest& forest);

/// 1 - concordance of the OOB scores. Subjects never out of bag are dropped and noted in
/// `warnings` when given.
double oob_error(const Forest& forest, std::vector<std::string>* warnings = nullptr);

struct VimpRow {
  std::string predictor;
  std::string domain;
  double importance = 0.0;
  std::size_t rank = 0;
  bool negative = false;
};

struct VimpTable {
  std::string stratum;
  double baseline_error = 0.0;
  std::vector<VimpRow> rows;  // descending importance, ranks 1..M
};

/// Permutation importance: for predictor j and repetition r one seeded permutation of
/// column j is applied, OOB scores are recomputed (only trees splitting on j change),
/// and importance = mean permuted error - baseline error.
VimpTable vimp(const Forest& forest);

/// Ranks by descending importance; ties by predictor name.
void rank_vimp(VimpTable& table);

void save_forest(const std::string& path, const Forest& forest);
Forest load_forest(const std::string& path);

}  // namespace crisk::forest
