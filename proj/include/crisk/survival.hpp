#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "crisk/types.hpp"

namespace crisk::survival {

/// Subjects on the age timescale with left truncation: subject i is at risk at age t
/// iff entry_i < t <= exit_i. Immutable once built.
class RiskSetIndex {
 public:
  static RiskSetIndex build(std::span<const Subject> subjects);
  static RiskSetIndex from_arrays(std::span<const double> entry, std::span<const double> exit,
                                  std::span<const EventKind> event, std::span<const double> weight,
                                  std::span<const std::size_t> cluster = {});

  std::size_t size() const noexcept { return entry_.size(); }
  std::span<const double> entry() const noexcept { return entry_; }
  std::span<const double> exit() const noexcept { return exit_; }
  std::span<const EventKind> event() const noexcept { return event_; }
  std::span<const double> weight() const noexcept { return weight_; }
  std::span<const std::size_t> cluster() const noexcept { return cluster_; }
  std::size_t n_clusters() const noexcept { return n_clusters_; }

  /// Distinct exit ages (any outcome), ascending.
  const std::vector<double>& times() const noexcept { return times_; }
  /// Subjects exiting at times()[k].
  std::span<const std::size_t> exits_at(std::size_t k) const;
  /// Distinct ages carrying at least one dementia or death, ascending.
  const std::vector<double>& event_ages() const noexcept { return event_ages_; }

  bool at_risk(std::size_t i, double age) const noexcept { return entry_[i] < age && age <= exit_[i]; }
  /// Number of subjects at risk at `age`, O(log n).
  std::size_t n_at_risk(double age) const;
  std::vector<std::size_t> at_risk_set(double age) const;
  /// Weighted count of subjects at risk, summed in subject order.
  double weight_at_risk(double age) const;

 private:
  std::vector<double> entry_, exit_, weight_;
  std::vector<EventKind> event_;
  std::vector<std::size_t> cluster_;
  std::size_t n_clusters_ = 0;
  std::vector<double> times_;
  std::vector<std::size_t> exit_offsets_, exit_subjects_;
  std::vector<double> event_ages_;
  std::vector<double> sorted_entry_, sorted_exit_;
};

/// Right-continuous step function starting at 1.
struct SurvCurve {
  std::vector<double> ages;
  std::vector<double> survival;

  double value_at(double age) const;
  /// Left limit S(age-).
  double value_before(double age) const;
};

/// Outcomes counted as events by the product-limit estimator.
enum class EventTarget { all_cause, dementia, death, censoring };

SurvCurve kaplan_meier(const RiskSetIndex& idx, EventTarget target);

inline constexpr std::size_t kCauseCount = 2;

inline std::size_t cause_slot(EventKind cause) noexcept { return cause == EventKind::death ? 1 : 0; }

/// Aalen-Johansen cumulative incidence per cause on the distinct event ages.
struct CifCurve {
  std::vector<double> ages;
  std::array<std::vector<double>, kCauseCount> cif;  // [dementia, death]
  std::vector<double> survival;                      // all-cause S at each age

  double value_at(EventKind cause, double age) const;
};

CifCurve aalen_johansen(const RiskSetIndex& idx);

/// Flattened risk sets for one partial likelihood. Each event age carries the event
/// subjects with their weights and every at-risk subject with its (possibly
/// time-varying) weight.
struct RiskSetDesign {
  std::vector<double> times;
  std::vector<std::size_t> event_offsets, event_subjects;
  std::vector<double> event_weights;
  std::vector<std::size_t> risk_offsets, risk_subjects;
  std::vector<double> risk_weights;
  std::size_t n_subjects = 0;
  std::vector<std::size_t> cluster;
  std::size_t n_clusters = 0;
  std::vector<std::string> warnings;

  std::size_t n_times() const noexcept { return times.size(); }
  double total_event_weight() const;
  std::size_t n_event_subjects() const noexcept { return event_subjects.size(); }
};

/// Cause-specific risk sets: other event kinds count as censoring at their exit age.
RiskSetDesign cause_specific_design(const RiskSetIndex& idx, EventKind cause);

/// Censoring-weight bookkeeping for the subdistribution risk sets.
struct FineGrayWeights {
  SurvCurve censoring;  // G-hat, censoring counted as the event
  bool degenerate = false;

  /// w_i(t) = G(t-)/G(T_i-) for a competing-event subject with exit T_i < t.
  double weight(double competing_exit, double age) const;
};

FineGrayWeights fine_gray_weights(const RiskSetIndex& idx);

/// Subdistribution risk sets: competing-event subjects stay at risk after their exit,
/// weighted by the censoring-probability ratio times their analysis weight.
RiskSetDesign fine_gray_design(const RiskSetIndex& idx, EventKind cause = EventKind::dementia);

struct LikelihoodEval {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

/// Weighted Breslow partial likelihood with its score and information at `beta`.
/// `x` is n_subjects x p.
LikelihoodEval evaluate(const RiskSetDesign& design, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta);

/// Per-subject score contributions (rows sum to the score), n_subjects x p.
Eigen::MatrixXd score_residuals(const RiskSetDesign& design, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta);

/// Cluster-robust sandwich I^-1 (sum_h g_h g_h') I^-1.
Eigen::MatrixXd robust_cluster_variance(const RiskSetDesign& design, const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& beta, const Eigen::MatrixXd& information);

struct FitOptions {
  int max_iterations = 25;
  double tolerance = 1e-10;  // relative log-likelihood change
};

struct MultiFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd information;
  Eigen::MatrixXd robust_covariance;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_path;
  std::vector<std::string> warnings;
};

/// Newton-Raphson from beta = 0 with step halving. Throws ZeroVariance, NoEvents,
/// NonIdentifiable (single predictor with a monotone likelihood), SingularInformation,
/// or NotConverged.
MultiFit fit_partial_likelihood(const RiskSetDesign& design, const Eigen::MatrixXd& x, const FitOptions& options = {});

struct FitResult {
  double beta = 0.0;
  double hr = 1.0;
  double robust_se = 0.0;
  double ci_lo = 1.0;
  double ci_hi = 1.0;
  std::size_t n_clusters = 0;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t n = 0;
  std::size_t n_events = 0;
  std::vector<std::string> warnings;
};

/// Single-predictor fit on a prepared design (the bivariate model).
FitResult fit_single(const RiskSetDesign& design, std::span<const double> x, const FitOptions& options = {});

FitResult cox_fit(const RiskSetIndex& idx, std::span<const double> x, EventKind cause, const FitOptions& options = {});
FitResult fine_gray_fit(const RiskSetIndex& idx, std::span<const double> x, EventKind cause = EventKind::dementia,
                        const FitOptions& options = {});

/// "H.HH (L.LL, U.UU)".
std::string format_hr(const FitResult& fit);

}  // namespace crisk::survival
