#include "doctest.h"

#include <cmath>
#include <functional>
#include <cstring>
#include <memory>

#include "crisk/cart.hpp"
#include "crisk/error.hpp"
#include "crisk/impute.hpp"
#include "crisk/rng.hpp"

using namespace crisk;
using namespace crisk::impute;

namespace {

std::vector<CovariateSpec> specs_of(std::initializer_list<CodingKind> kinds) {
  std::vector<CovariateSpec> out;
  int k = 0;
  for (auto kind : kinds) {
    CovariateSpec s;
    s.name = "c" + std::to_string(k++);
    s.kind = kind;
    out.push_back(s);
  }
  return out;
}

// Correlated continuous columns driven by two latent factors.
Eigen::MatrixXd latent_matrix(std::uint64_t seed, int n, int p) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i) {
    const double f1 = rng.normal(), f2 = rng.normal();
    for (int j = 0; j < p; ++j) x(i, j) = (j % 2 == 0 ? f1 : f2) * (1.0 + 0.1 * j) + 0.3 * rng.normal();
  }
  return x;
}

// Plain recursive greedy regression tree: every feature, every midpoint, first best.
struct GreedyNode {
  int feature = -1;
  double threshold = 0.0, value = 0.0;
  std::unique_ptr<GreedyNode> left, right;
};

std::unique_ptr<GreedyNode> greedy(const Eigen::MatrixXd& x, const std::vector<double>& y, std::vector<int> rows,
                                   int min_node) {
  auto node = std::make_unique<GreedyNode>();
  double sum = 0.0;
  for (int r : rows) sum += y[r];
  double first = y[rows[0]], dev = 0.0;
  for (int r : rows) dev += y[r] - first;
  node->value = first + dev / rows.size();
  if (static_cast<int>(rows.size()) < 2 * min_node) return node;
  double sse = 0.0;
  for (int r : rows) sse += (y[r] - sum / rows.size()) * (y[r] - sum / rows.size());
  double best = 1e-12 * sse, best_t = 0.0;
  int best_f = -1;
  for (int f = 0; f < x.cols(); ++f) {
    std::vector<double> vals;
    for (int r : rows) vals.push_back(x(r, f));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      const double t = vals[k] + (vals[k + 1] - vals[k]) / 2;
      double sl = 0, sr = 0;
      int nl = 0, nr = 0;
      for (int r : rows) {
        if (x(r, f) <= t) {
          sl += y[r];
          ++nl;
        } else {
          sr += y[r];
          ++nr;
        }
      }
      if (nl < min_node || nr < min_node) continue;
      const double gain = sl * sl / nl + sr * sr / nr - sum * sum / rows.size();
      if (gain > best * (1.0 + 1e-10)) {
        best = gain;
        best_f = f;
        best_t = t;
      }
    }
  }
  if (best_f < 0) return node;
  std::vector<int> l, r;
  for (int i : rows) (x(i, best_f) <= best_t ? l : r).push_back(i);
  node->feature = best_f;
  node->threshold = best_t;
  node->left = greedy(x, y, l, min_node);
  node->right = greedy(x, y, r, min_node);
  return node;
}

double greedy_predict(const GreedyNode& n, const Eigen::MatrixXd& x, int row) {
  if (n.feature < 0) return n.value;
  return greedy_predict(x(row, n.feature) <= n.threshold ? *n.left : *n.right, x, row);
}

}  // namespace

TEST_CASE("cart equals exhaustive greedy builder") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const int n = 12, p = 3;
    Eigen::MatrixXd x(n, p);
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
      y[i] = x(i, 0) + (x(i, 1) > 0 ? 1.0 : 0.0) + 0.2 * rng.normal();
    }
    std::vector<std::size_t> features = {0, 1, 2};
    std::vector<std::uint32_t> counts(n, 1);
    forest::CartConfig cfg;
    cfg.mtry = p;
    cfg.min_node = 1 + seed % 3;
    Rng tree_rng(seed + 100);
    const auto tree = forest::grow_cart(x, features, y, counts, cfg, tree_rng);
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
    const auto ref = greedy(x, y, rows, static_cast<int>(cfg.min_node));
    for (int i = 0; i < n; ++i) CHECK(tree.predict(x, i) == greedy_predict(*ref, x, i));
    // probe points off the training rows
    Eigen::MatrixXd probe(50, p);
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < p; ++j) probe(i, j) = 1.5 * rng.normal();
    for (int i = 0; i < 50; ++i) CHECK(tree.predict(probe, i) == greedy_predict(*ref, probe, i));
  }
}

TEST_CASE("cart classification majority and min_node") {
  Eigen::MatrixXd x(8, 1);
  x << 1, 2, 3, 4, 5, 6, 7, 8;
  std::vector<double> y = {-1, -1, -1, -1, 1, 1, 1, 1};
  std::vector<std::uint32_t> counts(8, 1);
  std::vector<std::size_t> f = {0};
  forest::CartConfig cfg;
  cfg.kind = forest::CartKind::classification;
  cfg.mtry = 1;
  cfg.min_node = 2;
  Rng rng(1);
  const auto tree = forest::grow_cart(x, f, y, counts, cfg, rng);
  REQUIRE(tree.nodes.size() == 3);
  CHECK(tree.nodes[0].threshold == 4.5);
  for (int i = 0; i < 8; ++i) CHECK(tree.predict(x, i) == y[i]);

  std::vector<double> tie = {-1, 1, -1, 1, -1, 1, -1, 1};
  cfg.min_node = 5;
  const auto stump = forest::grow_cart(x, f, tie, counts, cfg, rng);
  REQUIRE(stump.nodes.size() == 1);
  CHECK(stump.nodes[0].value == 1.0);
}

TEST_CASE("fill_initial") {
  Eigen::MatrixXd m(4, 3);
  m << 1, 1, 1, kMissing, 1, -1, 3, -1, kMissing, 2, kMissing, 1;
  const auto specs = specs_of({CodingKind::standardized_continuous, CodingKind::binary_pm1, CodingKind::binary_pm1});
  const auto f = fill_initial(m, specs);
  CHECK(f(1, 0) == 2.0);
  CHECK(f(3, 1) == 1.0);  // +1, +1, -1 -> majority +1
  CHECK(f(2, 2) == 1.0);  // +1, -1, +1 -> +1
  Eigen::MatrixXd tie(3, 1);
  tie << 1, -1, kMissing;
  CHECK(fill_initial(tie, specs_of({CodingKind::binary_pm1}))(2, 0) == 1.0);
  Eigen::MatrixXd gone(2, 1);
  gone << kMissing, kMissing;
  CHECK_THROWS_AS(fill_initial(gone, specs_of({CodingKind::binary_pm1})), Error);
}

TEST_CASE("impute trivial cases") {
  ImputeConfig cfg;
  cfg.trees_per_forest = 20;
  SUBCASE("nothing missing") {
    const auto x = latent_matrix(1, 30, 4);
    const auto out = impute::impute(x, specs_of({CodingKind::standardized_continuous, CodingKind::standardized_continuous,
                                         CodingKind::standardized_continuous, CodingKind::standardized_continuous}),
                            cfg);
    CHECK(out.values == x);
    CHECK(out.per_iteration_change.size() == 5);
    for (double c : out.per_iteration_change) CHECK(c == 0.0);
  }
  SUBCASE("constant column") {
    auto x = latent_matrix(2, 30, 3);
    for (int i = 0; i < 30; ++i) x(i, 1) = 0.1;
    x(7, 1) = kMissing;
    const auto out = impute::impute(
        x, specs_of({CodingKind::standardized_continuous, CodingKind::standardized_continuous, CodingKind::standardized_continuous}),
        cfg);
    CHECK(out.values(7, 1) == 0.1);
  }
  SUBCASE("errors") {
    Eigen::MatrixXd one(1, 2);
    one << 1, 2;
    CHECK_THROWS_AS(impute::impute(one, specs_of({CodingKind::binary_pm1, CodingKind::binary_pm1}), cfg), Error);
  }
}

TEST_CASE("impute beats mean fill and is deterministic") {
  const int n = 200, p = 5;
  const auto truth = latent_matrix(77, n, p);
  Eigen::MatrixXd x = truth;
  Rng rng(78);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j)
      if (rng.bernoulli(0.1)) x(i, j) = kMissing;
  std::vector<CovariateSpec> specs(p);
  for (int j = 0; j < p; ++j) specs[j].name = "v" + std::to_string(j);
  ImputeConfig cfg;
  cfg.trees_per_forest = 100;
  cfg.seed = 5;
  const auto out = impute::impute(x, specs, cfg);
  const auto mean = fill_initial(x, specs);
  double se = 0, se_mean = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) {
      if (!out.mask(i, j)) {
        CHECK(std::memcmp(&out.values(i, j), &x(i, j), sizeof(double)) == 0);
        continue;
      }
      se += std::pow(out.values(i, j) - truth(i, j), 2);
      se_mean += std::pow(mean(i, j) - truth(i, j), 2);
    }
  CHECK(se < se_mean);
  CHECK(out.visit_order.size() == p);
  for (std::size_t k = 1; k < out.visit_order.size(); ++k)
    CHECK(out.missing_fraction[out.visit_order[k - 1]] <= out.missing_fraction[out.visit_order[k]]);

  cfg.threads = 3;
  const auto threaded = impute::impute(x, specs, cfg);
  CHECK(threaded.values == out.values);
  CHECK(threaded.per_iteration_change == out.per_iteration_change);
}
