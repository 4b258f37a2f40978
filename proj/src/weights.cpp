#include "crisk/weights.hpp"

#include <algorithm>
#include <cmath>

#include "crisk/error.hpp"
#include "crisk/stats.hpp"

namespace crisk::weights {

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd x(features.rows(), features.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(features.cols()) = features;
  return x;
}

double sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
double softplus(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

double loglik_of(const Eigen::MatrixXd& x, const std::vector<bool>& y, std::span<const double> w,
                 const Eigen::VectorXd& b) {
  const Eigen::VectorXd eta = x * b;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) ll += w[i] * ((y[i] ? eta(i) : 0.0) - softplus(eta(i)));
  return ll;
}

Eigen::VectorXd score_of(const Eigen::MatrixXd& x, const std::vector<bool>& y, std::span<const double> w,
                         const Eigen::VectorXd& b) {
  const Eigen::VectorXd eta = x * b;
  Eigen::VectorXd r(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) r(i) = w[i] * ((y[i] ? 1.0 : 0.0) - sigmoid(eta(i)));
  return x.transpose() * r;
}

void check_inputs(const Eigen::MatrixXd& features, const std::vector<bool>& included, std::span<const double> w) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (included.size() != n || w.size() != n) throw Error(ErrorCode::DimensionMismatch, "propensity inputs differ in length");
  if (n <= static_cast<std::size_t>(features.cols()) + 1) throw Error(ErrorCode::InvalidArgument, "propensity model needs n > k");
  if (!features.allFinite()) throw Error(ErrorCode::InvalidArgument, "propensity features contain missing values");
  for (double v : w) {
    if (!(v > 0.0)) throw Error(ErrorCode::InvalidArgument, "base weights must be positive");
  }
  const auto n_in = std::count(included.begin(), included.end(), true);
  if (n_in == 0 || static_cast<std::size_t>(n_in) == n) {
    throw Error(ErrorCode::InvalidArgument, "inclusion indicator needs both classes");
  }
}

}  // namespace

double logit_loglik(const Eigen::MatrixXd& features, const std::vector<bool>& included,
                    std::span<const double> base_weights, const Eigen::VectorXd& coefficients) {
  return loglik_of(with_intercept(features), included, base_weights, coefficients);
}

Eigen::VectorXd logit_score(const Eigen::MatrixXd& features, const std::vector<bool>& included,
                            std::span<const double> base_weights, const Eigen::VectorXd& coefficients) {
  return score_of(with_intercept(features), included, base_weights, coefficients);
}

PropensityModel fit_propensity(const Eigen::MatrixXd& features, const std::vector<bool>& included,
                               std::span<const double> base_weights, const LogitOptions& options) {
  check_inputs(features, included, base_weights);
  const Eigen::MatrixXd x = with_intercept(features);
  const Eigen::Index n = x.rows(), k = x.cols();

  // Work on weights scaled to mean 1 so the score tolerance does not depend on the
  // units of the survey weights.
  double total = 0.0;
  for (double v : base_weights) total += v;
  std::vector<double> w(base_weights.begin(), base_weights.end());
  for (double& v : w) v *= static_cast<double>(n) / total;

  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < k) throw Error(ErrorCode::Singular, "propensity design is rank deficient");
  }

  PropensityModel model;
  model.included = included;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  double ll = loglik_of(x, included, w, beta);
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd wt(n), r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(eta(i));
      wt(i) = w[i] * p * (1.0 - p);
      r(i) = w[i] * ((included[i] ? 1.0 : 0.0) - p);
    }
    const Eigen::VectorXd score = x.transpose() * r;
    if (score.lpNorm<Eigen::Infinity>() < options.score_tolerance) {
      model.converged = true;
      model.iterations_used = it - 1;
      break;
    }
    const Eigen::MatrixXd info = x.transpose() * wt.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw Error(ErrorCode::Singular, "propensity information matrix is singular");
    }
    Eigen::VectorXd step = ldlt.solve(score);
    double next_ll = loglik_of(x, included, w, beta + step);
    for (int half = 0; half < 30 && !(next_ll >= ll); ++half) {
      step *= 0.5;
      next_ll = loglik_of(x, included, w, beta + step);
    }
    beta += step;
    const double change = std::abs(next_ll - ll) / std::max(std::abs(next_ll), 1e-300);
    ll = next_ll;
    model.iterations_used = it;
    if (change < options.loglik_tolerance) {
      model.converged = true;
      break;
    }
  }

  model.coefficients = beta;
  model.loglik = ll * total / static_cast<double>(n);
  const Eigen::VectorXd eta = x * beta;
  model.fitted_probabilities.resize(static_cast<std::size_t>(n));
  bool extreme = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = sigmoid(eta(i));
    model.fitted_probabilities[i] = p;
    if (p < 1e-12 || p > 1.0 - 1e-12) extreme = true;
  }
  if (extreme) throw Error(ErrorCode::Separation, "fitted propensities reach 0 or 1; inclusion is separable");
  return model;
}

std::vector<double> compute_ipw(const PropensityModel& model, std::span<const double> base_weights,
                                double truncation_quantile) {
  if (!model.converged) throw Error(ErrorCode::NotConverged, "propensity model did not converge");
  const auto n = model.fitted_probabilities.size();
  if (base_weights.size() != n || model.included.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "base weights do not match the propensity model");
  }
  std::vector<double> out(n, 0.0);
  std::vector<double> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (!model.included[i]) continue;
    out[i] = base_weights[i] / model.fitted_probabilities[i];
    kept.push_back(out[i]);
  }
  if (!kept.empty() && truncation_quantile < 1.0) {
    const double cap = quantile(kept, truncation_quantile);
    for (double& v : out) v = std::min(v, cap);
  }
  return out;
}

}  // namespace crisk::weights
