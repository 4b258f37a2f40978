#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "crisk/rng.hpp"

namespace crisk::forest {

enum class CartKind { regression, classification };

struct CartConfig {
  CartKind kind = CartKind::regression;
  std::size_t mtry = 1;
  std::size_t min_node = 5;   // each child keeps at least this many draws
  std::size_t max_depth = 0;  // 0 = unlimited
};

struct CartNode {
  std::int32_t feature = -1;  // column of x; -1 for a leaf
  double threshold = 0.0;     // left child takes x <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
};

struct CartTree {
  std::vector<CartNode> nodes;

  double predict(const Eigen::MatrixXd& x, Eigen::Index row) const;
  std::size_t leaf_count() const;
};

/// Row indices sorted by each listed column (stable); reusable across trees grown on
/// the same matrix.
std::vector<std::vector<std::uint32_t>> column_orders(const Eigen::MatrixXd& x, std::span<const std::size_t> features);

/// Grows one regression (variance) or classification (Gini, labels +/-1) tree on the
/// rows with nonzero `counts` (bootstrap multiplicities). Only the columns listed in
/// `features` are split on; `mtry` of them are drawn without replacement per node.
/// `orders` may carry column_orders(x, features) to skip the per-tree sort.
CartTree grow_cart(const Eigen::MatrixXd& x, std::span<const std::size_t> features, std::span<const double> y,
                   std::span<const std::uint32_t> counts, const CartConfig& cfg, Rng& rng,
                   std::span<const std::vector<std::uint32_t>> orders = {});

}  // namespace crisk::forest
