#include "crisk/cart.hpp"

#include <algorithm>
#include <utility>

#include "crisk/error.hpp"

namespace crisk::forest {

double CartTree::predict(const Eigen::MatrixXd& x, Eigen::Index row) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    const auto& n = nodes[k];
    k = static_cast<std::size_t>(x(row, n.feature) <= n.threshold ? n.left : n.right);
  }
  return nodes[k].value;
}

std::size_t CartTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const CartNode& n) { return n.feature < 0; }));
}

namespace {

struct Moments {
  double n = 0.0;
  double sum = 0.0;  // regression: sum of y; classification: count of +1
  double sq = 0.0;   // regression: sum of y^2
};

// Child score to maximize; the parent's score is subtracted to get the gain.
double score(const Moments& m, CartKind kind) {
  if (m.n <= 0.0) return 0.0;
  if (kind == CartKind::regression) return m.sum * m.sum / m.n;
  const double neg = m.n - m.sum;
  return (m.sum * m.sum + neg * neg) / m.n;
}

double leaf_value(std::span<const std::uint32_t> rows, std::span<const double> y, std::span<const std::uint32_t> counts,
                  CartKind kind) {
  if (kind == CartKind::classification) {
    double pos = 0.0, neg = 0.0;
    for (auto r : rows) (y[r] > 0 ? pos : neg) += counts[r];
    return pos >= neg ? 1.0 : -1.0;
  }
  // first + mean of deviations in row order: exact when every value is the same
  std::vector<std::uint32_t> ordered(rows.begin(), rows.end());
  std::sort(ordered.begin(), ordered.end());
  const double first = y[ordered.front()];
  double dev = 0.0, n = 0.0;
  for (auto r : ordered) {
    dev += counts[r] * (y[r] - first);
    n += counts[r];
  }
  return first + dev / n;
}

struct Pending {
  std::size_t node;
  std::size_t begin, end;  // range in the row buffer
  std::size_t depth;
};

}  // namespace

std::vector<std::vector<std::uint32_t>> column_orders(const Eigen::MatrixXd& x, std::span<const std::size_t> features) {
  std::vector<std::vector<std::uint32_t>> out(features.size());
  for (std::size_t k = 0; k < features.size(); ++k) {
    auto& o = out[k];
    o.resize(static_cast<std::size_t>(x.rows()));
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<std::uint32_t>(i);
    const auto f = static_cast<Eigen::Index>(features[k]);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }
  return out;
}

CartTree grow_cart(const Eigen::MatrixXd& x, std::span<const std::size_t> features, std::span<const double> y,
                   std::span<const std::uint32_t> counts, const CartConfig& cfg, Rng& rng,
                   std::span<const std::vector<std::uint32_t>> orders) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != n || counts.size() != n) throw Error(ErrorCode::DimensionMismatch, "tree inputs differ in length");
  std::vector<std::vector<std::uint32_t>> own_orders;
  if (orders.empty()) {
    own_orders = column_orders(x, features);
    orders = own_orders;
  }
  const std::size_t n_features = features.size();

  // lists[k * m + r]: in-sample rows sorted by feature k; every node owns the same
  // [begin, end) range in each list, kept by stable partitioning on each split.
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) m += counts[i] > 0;
  if (m == 0) throw Error(ErrorCode::EmptySample, "no rows in the bootstrap sample");
  const std::size_t width = std::max<std::size_t>(n_features, 1);
  std::vector<std::uint32_t> lists(width * m);
  if (n_features == 0) {
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (counts[i] > 0) lists[r++] = static_cast<std::uint32_t>(i);
  }
  for (std::size_t k = 0; k < n_features; ++k) {
    std::size_t r = 0;
    for (auto i : orders[k])
      if (counts[i] > 0) lists[k * m + r++] = i;
  }
  std::vector<std::uint8_t> goes_left(n, 0);
  std::vector<std::uint32_t> scratch(m);

  CartTree tree;
  tree.nodes.emplace_back();
  std::vector<Pending> stack = {{0, 0, m, 0}};
  const std::size_t mtry = std::min(cfg.mtry, n_features);
  const double min_node = static_cast<double>(std::max<std::size_t>(cfg.min_node, 1));
  const bool classify = cfg.kind == CartKind::classification;
  auto target = [&](std::uint32_t r) { return classify ? (y[r] > 0 ? 1.0 : 0.0) : y[r]; };

  while (!stack.empty()) {
    const Pending job = stack.back();
    stack.pop_back();
    const std::span<const std::uint32_t> node_rows(lists.data() + job.begin, job.end - job.begin);

    Moments total;
    double lo = y[node_rows.front()], hi = lo;
    for (auto r : node_rows) {
      const double c = counts[r];
      total.n += c;
      total.sum += c * target(r);
      total.sq += c * y[r] * y[r];
      lo = std::min(lo, y[r]);
      hi = std::max(hi, y[r]);
    }
    auto make_leaf = [&] { tree.nodes[job.node].value = leaf_value(node_rows, y, counts, cfg.kind); };
    const bool depth_ok = cfg.max_depth == 0 || job.depth < cfg.max_depth;
    if (!depth_ok || total.n < 2.0 * min_node || lo == hi || mtry == 0) {
      make_leaf();
      continue;
    }

    const double parent = score(total, cfg.kind);
    // Impurity scale guarding against splits that only reshuffle rounding error.
    const double impurity = classify ? total.n - parent : total.sq - parent;
    double best_gain = 1e-12 * std::max(impurity, 0.0);
    std::size_t best_k = n_features;
    double best_threshold = 0.0;

    // Candidates in ascending column order; near-equal gains (relative 1e-10) keep the
    // earlier candidate, so ties resolve to the lowest column and threshold.
    auto picks = rng.sample_without_replacement(n_features, mtry);
    std::sort(picks.begin(), picks.end());
    for (auto k : picks) {
      const auto f = static_cast<Eigen::Index>(features[k]);
      const std::uint32_t* sorted = lists.data() + k * m + job.begin;
      const std::size_t len = job.end - job.begin;
      if (x(sorted[0], f) == x(sorted[len - 1], f)) continue;
      Moments left;
      for (std::size_t q = 0; q + 1 < len; ++q) {
        const auto r = sorted[q];
        const double c = counts[r];
        left.n += c;
        left.sum += c * target(r);
        const double a = x(r, f), b = x(sorted[q + 1], f);
        if (a == b) continue;
        if (left.n < min_node) continue;
        if (total.n - left.n < min_node) break;
        const Moments right{total.n - left.n, total.sum - left.sum, 0.0};
        const double gain = score(left, cfg.kind) + score(right, cfg.kind) - parent;
        if (gain > best_gain * (1.0 + 1e-10)) {
          best_gain = gain;
          best_k = k;
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best_threshold = mid;
        }
      }
    }
    if (best_k == n_features) {
      make_leaf();
      continue;
    }

    const auto best_feature = static_cast<Eigen::Index>(features[best_k]);
    std::size_t n_left = 0;
    for (auto r : node_rows) {
      goes_left[r] = x(r, best_feature) <= best_threshold;
      n_left += goes_left[r];
    }
    for (std::size_t k = 0; k < width; ++k) {
      std::uint32_t* seg = lists.data() + k * m + job.begin;
      const std::size_t len = job.end - job.begin;
      std::size_t l = 0, rgt = n_left;
      for (std::size_t q = 0; q < len; ++q) scratch[goes_left[seg[q]] ? l++ : rgt++] = seg[q];
      std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(len), seg);
    }
    const std::size_t split = job.begin + n_left;
    const auto left_id = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[job.node];
    node.feature = static_cast<std::int32_t>(best_feature);
    node.threshold = best_threshold;
    node.left = static_cast<std::int32_t>(left_id);
    node.right = static_cast<std::int32_t>(left_id + 1);
    stack.push_back({left_id + 1, split, job.end, job.depth + 1});
    stack.push_back({left_id, job.begin, split, job.depth + 1});
  }
  return tree;
}

}  // namespace crisk::forest
