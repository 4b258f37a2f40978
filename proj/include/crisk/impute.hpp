#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "crisk/types.hpp"

namespace crisk::impute {

struct ImputeConfig {
  int iterations = 5;
  int trees_per_forest = 500;
  std::size_t mtry = 0;  // 0 = floor(sqrt(p)), capped at p - 1
  std::size_t min_node = 5;
  std::uint64_t seed = 1;
  bool use_weights = false;  // weight-proportional bootstrap when true
  unsigned threads = 1;
};

struct ImputedMatrix {
  Eigen::MatrixXd values;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // true where the input was missing
  /// Per iteration: sum of squared changes over imputed continuous cells divided by the
  /// sum of squares of their new values (0 when there are none).
  std::vector<double> per_iteration_change;
  /// Per iteration: fraction of imputed binary cells whose value flipped.
  std::vector<double> per_iteration_binary_change;
  std::vector<double> missing_fraction;    // per column
  std::vector<std::size_t> visit_order;    // ascending missingness
};

/// Mean fill for continuous columns, majority fill (ties -> +1) for binary ones.
/// Throws AllMissingColumn.
Eigen::MatrixXd fill_initial(const Eigen::MatrixXd& matrix, std::span<const CovariateSpec> specs);

/// Iterative random-forest imputation. Observed cells are never written. Throws
/// EmptyMatrix, AllMissingColumn, DimensionMismatch.
ImputedMatrix impute(const Eigen::MatrixXd& matrix, std::span<const CovariateSpec> specs, const ImputeConfig& cfg,
                     std::span<const double> weights = {});

}  // namespace crisk::impute
