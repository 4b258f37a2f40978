#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace crisk::weights {

struct PropensityModel {
  Eigen::VectorXd coefficients;  // intercept first
  std::vector<double> fitted_probabilities;
  std::vector<bool> included;
  double loglik = 0.0;
  bool converged = false;
  int iterations_used = 0;
};

struct LogitOptions {
  int max_iterations = 50;
  double score_tolerance = 1e-8;
  double loglik_tolerance = 1e-10;
};

/// Weighted logit log-likelihood and score for the design [1, features].
double logit_loglik(const Eigen::MatrixXd& features, const std::vector<bool>& included,
                    std::span<const double> base_weights, const Eigen::VectorXd& coefficients);
Eigen::VectorXd logit_score(const Eigen::MatrixXd& features, const std::vector<bool>& included,
                            std::span<const double> base_weights, const Eigen::VectorXd& coefficients);

/// Weighted maximum-likelihood logit for P(included | features) by IRLS. An intercept
/// is added; `features` may have zero columns. Throws Separation, Singular,
/// InvalidArgument.
PropensityModel fit_propensity(const Eigen::MatrixXd& features, const std::vector<bool>& included,
                               std::span<const double> base_weights, const LogitOptions& options = {});

/// base_weight / p-hat for included subjects, capped at the `truncation_quantile`
/// (type 7) of the included weights; 0 for everyone else. A quantile >= 1 disables
/// the cap. Throws NotConverged.
std::vector<double> compute_ipw(const PropensityModel& model, std::span<const double> base_weights,
                                double truncation_quantile = 0.99);

}  // namespace crisk::weights
