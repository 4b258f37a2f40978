#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crisk/csv.hpp"
#include "crisk/types.hpp"

namespace crisk {

/// Subjects plus the covariate coding they were built with.
struct AnalysisTable {
  std::vector<CovariateSpec> specs;
  std::vector<std::string> extra_columns;
  std::vector<Subject> subjects;

  std::optional<std::size_t> covariate_index(std::string_view name) const;
};

namespace cohort {

enum class RespondentKind { self, proxy };
enum class VitalStatus { alive, dead };

struct CognitionRecord {
  RespondentKind respondent_kind = RespondentKind::self;
  std::optional<int> self_score;   // 0-27
  std::optional<int> proxy_score;  // 0-11
  double interview_age = 0.0;
};

/// One follow-up interview. `dementia` is empty when cognition was not assessed.
struct Wave {
  double age = 0.0;
  std::optional<bool> dementia;
  VitalStatus vital = VitalStatus::alive;
};

struct Outcome {
  double exit_age = 0.0;
  EventKind event = EventKind::censored;
};

inline constexpr int kSelfScoreMax = 27;
inline constexpr int kProxyScoreMax = 11;
inline constexpr int kSelfDementiaMax = 6;   // self-respondent: 0-6 of 27
inline constexpr int kProxyDementiaMin = 6;  // proxy: 6-11 of 11

/// Centers and scales the observed entries to mean 0 and sample sd 1 (n-1 denominator);
/// NaN entries pass through. `reverse` flips the sign so larger values mean higher risk.
std::vector<double> standardize(std::span<const double> values, bool reverse = false);

/// yes -> +1, no -> -1, missing -> NaN.
double encode_binary(std::optional<bool> raw) noexcept;

/// Parses yes/no style raw cells: yes/y/true/1 and no/n/false/0/-1; empty is missing.
std::optional<bool> parse_flag(std::string_view cell);

bool classify_langa_weir(const CognitionRecord& rec);

Outcome derive_event(std::span<const Wave> waves);

struct MissingnessFilter {
  std::vector<CovariateSpec> retained;
  std::vector<CovariateSpec> excluded;
};

/// Keeps a covariate iff its missing fraction is strictly below `threshold`.
MissingnessFilter filter_missingness(std::span<const CovariateSpec> specs, double threshold = 0.20);

/// Standardized residuals of `pgs` regressed on an intercept plus the principal
/// component columns of `pcs`.
std::vector<double> residualize_pgs(std::span<const double> pgs, const Eigen::MatrixXd& pcs,
                                    bool reverse = false);

/// Codes one raw column (strings, empty = missing) according to `spec`. `zero_mask`, when
/// given, marks rows forced to 0 and excluded from the standardization moments.
std::vector<double> code_covariate(const CovariateSpec& spec, std::span<const std::string> raw,
                                   const std::vector<bool>& zero_mask = {});

struct BuildOptions {
  double missing_threshold = 0.20;
  std::optional<double> min_baseline_age;
  std::vector<std::string> keep_columns;
  /// Principal component columns used to residualize genetic-domain scores; used only
  /// when every listed column is present.
  std::vector<std::string> pc_columns = {"pc1", "pc2", "pc3", "pc4", "pc5",
                                         "pc6", "pc7", "pc8", "pc9", "pc10"};
};

struct BuildReport {
  std::vector<CovariateSpec> excluded;
  std::vector<std::string> warnings;
  std::size_t dropped_subjects = 0;
  bool pgs_residualized = false;
};

/// Builds one analysis row per subject from long-format (subject-wave) records.
/// Required columns: id, household_id, stratum, interview_age, respondent_kind,
/// self_score, proxy_score, vital_status, base_weight. An optional event_override
/// column (yes/no) replaces the cut-point classification for a wave.
AnalysisTable build_cohort(const CsvTable& long_rows, std::vector<CovariateSpec> specs,
                           const BuildOptions& options = {}, BuildReport* report = nullptr);

}  // namespace cohort
}  // namespace crisk
