#include "crisk/impute.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "crisk/cart.hpp"
#include "crisk/error.hpp"
#include "crisk/parallel.hpp"
#include "crisk/rng.hpp"
#include "crisk/stats.hpp"

namespace crisk::impute {

namespace {

bool is_binary(const CovariateSpec& s) { return s.kind == CodingKind::binary_pm1; }

void check_shape(const Eigen::MatrixXd& matrix, std::span<const CovariateSpec> specs) {
  if (matrix.rows() < 2 || matrix.cols() == 0) throw Error(ErrorCode::EmptyMatrix, "imputation needs n >= 2 and p >= 1");
  if (static_cast<std::size_t>(matrix.cols()) != specs.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one spec per matrix column is required");
  }
}

// Bootstrap multiplicities over the observed rows, optionally weight-proportional.
std::vector<std::uint32_t> bootstrap(std::span<const std::size_t> observed, std::size_t n_rows,
                                     std::span<const double> cumulative, Rng& rng) {
  std::vector<std::uint32_t> counts(n_rows, 0);
  const auto m = observed.size();
  for (std::size_t d = 0; d < m; ++d) {
    std::size_t k;
    if (cumulative.empty()) {
      k = static_cast<std::size_t>(rng.below(m));
    } else {
      const double u = rng.uniform() * cumulative.back();
      k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      k = std::min(k, m - 1);
    }
    ++counts[observed[k]];
  }
  return counts;
}

}  // namespace

Eigen::MatrixXd fill_initial(const Eigen::MatrixXd& matrix, std::span<const CovariateSpec> specs) {
  check_shape(matrix, specs);
  Eigen::MatrixXd out = matrix;
  for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
    std::vector<double> seen;
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
      if (!is_missing(matrix(i, j))) seen.push_back(matrix(i, j));
    }
    if (seen.empty()) throw Error(ErrorCode::AllMissingColumn, fmt::format("column '{}' has no observed values", specs[j].name));
    double fill;
    if (is_binary(specs[j])) {
      const auto pos = std::count_if(seen.begin(), seen.end(), [](double v) { return v > 0; });
      fill = 2 * pos >= static_cast<std::ptrdiff_t>(seen.size()) ? 1.0 : -1.0;
    } else {
      fill = stable_mean(seen);
    }
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
      if (is_missing(out(i, j))) out(i, j) = fill;
    }
  }
  return out;
}

ImputedMatrix impute(const Eigen::MatrixXd& matrix, std::span<const CovariateSpec> specs, const ImputeConfig& cfg,
                     std::span<const double> weights) {
  check_shape(matrix, specs);
  if (cfg.iterations < 1 || cfg.trees_per_forest < 1) throw Error(ErrorCode::InvalidArgument, "iterations and trees must be >= 1");
  const auto n = static_cast<std::size_t>(matrix.rows());
  const auto p = static_cast<std::size_t>(matrix.cols());
  if (cfg.use_weights && weights.size() != n) throw Error(ErrorCode::DimensionMismatch, "one weight per row is required");

  ImputedMatrix out;
  out.values = fill_initial(matrix, specs);
  out.mask.resize(matrix.rows(), matrix.cols());
  std::vector<std::vector<std::size_t>> missing_rows(p), observed_rows(p);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool miss = is_missing(matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out.mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = miss;
      (miss ? missing_rows[j] : observed_rows[j]).push_back(i);
    }
    out.missing_fraction.push_back(static_cast<double>(missing_rows[j].size()) / static_cast<double>(n));
  }
  out.visit_order.resize(p);
  std::iota(out.visit_order.begin(), out.visit_order.end(), 0);
  std::stable_sort(out.visit_order.begin(), out.visit_order.end(),
                   [&](std::size_t a, std::size_t b) { return missing_rows[a].size() < missing_rows[b].size(); });

  const std::size_t mtry = cfg.mtry > 0 ? std::min(cfg.mtry, p - 1)
                                        : std::min<std::size_t>(p - 1, std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(p)))));
  const auto n_trees = static_cast<std::size_t>(cfg.trees_per_forest);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    double change_num = 0.0, change_den = 0.0;
    std::size_t flips = 0, binary_cells = 0;
    for (auto j : out.visit_order) {
      const auto& miss = missing_rows[j];
      if (miss.empty()) continue;
      const auto& obs = observed_rows[j];
      std::vector<std::size_t> features;
      for (std::size_t k = 0; k < p; ++k) {
        if (k != j) features.push_back(k);
      }
      std::vector<double> y(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      std::vector<double> cumulative;
      if (cfg.use_weights) {
        double acc = 0.0;
        for (auto i : obs) cumulative.push_back(acc += weights[i]);
      }
      forest::CartConfig tc;
      tc.kind = is_binary(specs[j]) ? forest::CartKind::classification : forest::CartKind::regression;
      tc.mtry = mtry;
      tc.min_node = cfg.min_node;

      const auto orders = forest::column_orders(out.values, features);
      // predictions[t * miss.size() + m]
      std::vector<double> predictions(n_trees * miss.size());
      parallel_for(n_trees, cfg.threads, [&](std::size_t t) {
        Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(iter), j, t}));
        const auto counts = bootstrap(obs, n, cumulative, rng);
        const auto tree = forest::grow_cart(out.values, features, y, counts, tc, rng, orders);
        for (std::size_t m = 0; m < miss.size(); ++m) {
          predictions[t * miss.size() + m] = tree.predict(out.values, static_cast<Eigen::Index>(miss[m]));
        }
      });

      for (std::size_t m = 0; m < miss.size(); ++m) {
        double value;
        if (tc.kind == forest::CartKind::classification) {
          std::size_t pos = 0;
          for (std::size_t t = 0; t < n_trees; ++t) pos += predictions[t * miss.size() + m] > 0;
          value = 2 * pos >= n_trees ? 1.0 : -1.0;
        } else {
          const double first = predictions[m];
          double dev = 0.0;
          for (std::size_t t = 0; t < n_trees; ++t) dev += predictions[t * miss.size() + m] - first;
          value = first + dev / static_cast<double>(n_trees);
        }
        double& cell = out.values(static_cast<Eigen::Index>(miss[m]), static_cast<Eigen::Index>(j));
        if (tc.kind == forest::CartKind::classification) {
          ++binary_cells;
          flips += value != cell;
        } else {
          change_num += (value - cell) * (value - cell);
          change_den += value * value;
        }
        cell = value;
      }
    }
    out.per_iteration_change.push_back(change_den > 0.0 ? change_num / change_den : 0.0);
    out.per_iteration_binary_change.push_back(binary_cells > 0 ? static_cast<double>(flips) / static_cast<double>(binary_cells) : 0.0);
  }
  return out;
}

}  // namespace crisk::impute
