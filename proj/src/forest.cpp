#include "crisk/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>
#include <fmt/format.h>

#include "crisk/error.hpp"
#include "crisk/parallel.hpp"
#include "crisk/stats.hpp"

namespace crisk::forest {

std::string_view to_string(SplitRule rule) noexcept {
  return rule == SplitRule::subdistribution_logrank ? "subdistribution_logrank" : "causespecific_logrank";
}

SplitRule parse_split_rule(std::string_view text) {
  if (text == "subdistribution_logrank" || text == "subdistribution") return SplitRule::subdistribution_logrank;
  if (text == "causespecific_logrank" || text == "causespecific") return SplitRule::causespecific_logrank;
  throw Error(ErrorCode::Parse, fmt::format("unknown split rule '{}'", text));
}

std::size_t ForestConfig::resolved_mtry(std::size_t n_predictors) const {
  if (n_predictors == 0) return 0;
  const std::size_t m = mtry > 0 ? mtry : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_predictors))));
  return std::min(m, n_predictors);
}

void ForestData::prepare() {
  const auto idx = survival::RiskSetIndex::from_arrays(entry, exit, event, weight);
  censoring = survival::kaplan_meier(idx, survival::EventTarget::censoring);
}

ForestData make_forest_data(const AnalysisTable& table, std::span<const std::size_t> rows,
                            std::span<const std::size_t> predictors, std::string stratum) {
  std::vector<std::size_t> cols(predictors.begin(), predictors.end());
  if (cols.empty()) {
    cols.resize(table.specs.size());
    std::iota(cols.begin(), cols.end(), 0);
  }
  ForestData d;
  d.stratum = std::move(stratum);
  d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    d.names.push_back(table.specs.at(cols[c]).name);
    d.domains.emplace_back(to_string(table.specs[cols[c]].domain));
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& s = table.subjects.at(rows[r]);
    d.entry.push_back(s.entry_age);
    d.exit.push_back(s.exit_age);
    d.event.push_back(s.event);
    d.weight.push_back(s.analysis_weight);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double v = s.covariates.at(cols[c]);
      if (is_missing(v)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("subject {}: missing '{}' (impute first)", s.id, d.names[c]));
      }
      d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  if (!d.entry.empty()) d.prepare();
  return d;
}

double TerminalCif::value_at(EventKind cause, double age) const {
  const auto k = static_cast<std::size_t>(std::upper_bound(ages.begin(), ages.end(), age) - ages.begin());
  if (k == 0) return 0.0;
  return cause == EventKind::death ? death[k - 1] : dementia[k - 1];
}

std::size_t SurvTree::drop(const Eigen::MatrixXd& x, Eigen::Index row, std::int32_t override_column,
                           double override_value) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    const auto& n = nodes[k];
    const double v = n.feature == override_column ? override_value : x(row, n.feature);
    k = static_cast<std::size_t>(v <= n.threshold ? n.left : n.right);
  }
  return static_cast<std::size_t>(nodes[k].terminal);
}

std::size_t SurvTree::drop(std::span<const double> x) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    const auto& n = nodes[k];
    k = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return static_cast<std::size_t>(nodes[k].terminal);
}

bool SurvTree::splits_on(std::size_t feature) const {
  return std::any_of(nodes.begin(), nodes.end(),
                     [&](const SurvNode& n) { return n.feature == static_cast<std::int32_t>(feature); });
}

std::vector<std::uint32_t> draw_bootstrap(std::size_t n, std::span<const double> weights, Rng& rng) {
  std::vector<std::uint32_t> counts(n, 0);
  if (n == 0) return counts;
  if (weights.empty()) {
    for (std::size_t d = 0; d < n; ++d) ++counts[rng.below(n)];
    return counts;
  }
  if (weights.size() != n) throw Error(ErrorCode::DimensionMismatch, "one bootstrap weight per subject is required");
  std::vector<double> cumulative(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) cumulative[i] = acc += weights[i];
  if (!(acc > 0.0)) throw Error(ErrorCode::InvalidArgument, "bootstrap weights sum to zero");
  for (std::size_t d = 0; d < n; ++d) {
    const double u = rng.uniform() * acc;
    auto k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    ++counts[std::min(k, n - 1)];
  }
  return counts;
}

namespace {

// G(age-) with the last positive value standing in once G has reached zero.
double censoring_before(const survival::SurvCurve& g, double age) {
  auto k = static_cast<std::size_t>(std::lower_bound(g.ages.begin(), g.ages.end(), age) - g.ages.begin());
  while (k > 0 && g.survival[k - 1] <= 0.0) --k;
  return k == 0 ? 1.0 : g.survival[k - 1];
}

TerminalCif terminal_cif(const ForestData& data, std::span<const std::uint32_t> rows,
                         std::span<const std::uint32_t> counts, double horizon) {
  std::vector<std::uint32_t> ordered(rows.begin(), rows.end());
  std::sort(ordered.begin(), ordered.end());
  std::vector<double> entry, exit, w;
  std::vector<EventKind> ev;
  for (auto r : ordered) {
    entry.push_back(data.entry[r]);
    exit.push_back(data.exit[r]);
    ev.push_back(data.event[r]);
    w.push_back(counts[r]);
  }
  const auto aj = survival::aalen_johansen(survival::RiskSetIndex::from_arrays(entry, exit, ev, w));
  TerminalCif t;
  t.ages = aj.ages;
  t.dementia = aj.cif[0];
  t.death = aj.cif[1];
  t.at_horizon = t.value_at(EventKind::dementia, horizon);
  return t;
}

// Log-rank scan state for one node: event ages of the primary cause, each member's
// at-risk index range, and the node totals.
struct NodeScan {
  std::vector<double> times;
  std::vector<double> g_before;                 // G(t_j-) for the subdistribution weights
  std::vector<double> y_total, d_total;
  double events = 0.0;

  void build(const ForestData& data, std::span<const std::uint32_t> rows, std::span<const std::uint32_t> counts,
             bool subdistribution, std::vector<std::uint32_t>& lo, std::vector<std::uint32_t>& hi,
             std::vector<double>& coef, std::vector<std::int32_t>& event_at) {
    times.clear();
    for (auto r : rows) {
      if (data.event[r] == EventKind::dementia) times.push_back(data.exit[r]);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    const std::size_t nt = times.size();
    g_before.resize(nt);
    for (std::size_t j = 0; j < nt; ++j) g_before[j] = subdistribution ? censoring_before(data.censoring, times[j]) : 0.0;
    std::vector<double> da(nt + 1, 0.0), db(nt + 1, 0.0);
    d_total.assign(nt, 0.0);
    events = 0.0;
    for (auto r : rows) {
      const double c = counts[r];
      lo[r] = static_cast<std::uint32_t>(std::upper_bound(times.begin(), times.end(), data.entry[r]) - times.begin());
      hi[r] = static_cast<std::uint32_t>(std::upper_bound(times.begin(), times.end(), data.exit[r]) - times.begin());
      da[lo[r]] += c;
      da[hi[r]] -= c;
      coef[r] = 0.0;
      if (subdistribution && data.event[r] == EventKind::death) {
        coef[r] = c / censoring_before(data.censoring, data.exit[r]);
        db[hi[r]] += coef[r];
      }
      event_at[r] = -1;
      if (data.event[r] == EventKind::dementia) {
        event_at[r] = static_cast<std::int32_t>(hi[r] - 1);
        d_total[hi[r] - 1] += c;
        events += c;
      }
    }
    y_total.resize(nt);
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < nt; ++j) {
      a += da[j];
      b += db[j];
      y_total[j] = a + g_before[j] * b;
    }
  }
};

struct Job {
  std::size_t node;
  std::size_t begin, end;
  std::size_t depth;
};

}  // namespace

SurvTree grow_tree(const ForestData& data, std::span<const std::uint32_t> inbag, const ForestConfig& cfg, Rng& rng,
                   double horizon) {
  const std::size_t n = data.size();
  if (inbag.size() != n) throw Error(ErrorCode::DimensionMismatch, "in-bag counts do not match the data");
  std::vector<std::uint32_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (inbag[i] > 0) rows.push_back(static_cast<std::uint32_t>(i));
  }
  if (rows.empty()) throw Error(ErrorCode::EmptySample, "no in-bag subjects");

  const bool subdistribution = cfg.split_rule == SplitRule::subdistribution_logrank;
  const std::size_t n_features = data.n_predictors();
  const std::size_t mtry = cfg.resolved_mtry(n_features);
  const double min_events = static_cast<double>(std::max<std::size_t>(cfg.min_terminal_events, 1));

  SurvTree tree;
  tree.inbag.assign(inbag.begin(), inbag.end());
  tree.nodes.emplace_back();
  std::vector<Job> stack = {{0, 0, rows.size(), 0}};

  NodeScan scan;
  std::vector<std::uint32_t> lo(n), hi(n);
  std::vector<double> coef(n);
  std::vector<std::int32_t> event_at(n);
  std::vector<std::pair<double, std::uint32_t>> sorted;
  std::vector<double> da, db, dl;

  auto make_terminal = [&](const Job& job) {
    tree.nodes[job.node].terminal = static_cast<std::int32_t>(tree.terminals.size());
    tree.terminals.push_back(
        terminal_cif(data, std::span<const std::uint32_t>(rows.data() + job.begin, job.end - job.begin), inbag, horizon));
  };

  while (!stack.empty()) {
    const Job job = stack.back();
    stack.pop_back();
    const std::span<const std::uint32_t> node_rows(rows.data() + job.begin, job.end - job.begin);
    const bool depth_ok = cfg.max_depth == 0 || job.depth < cfg.max_depth;
    if (!depth_ok || mtry == 0 || node_rows.size() < 2) {
      make_terminal(job);
      continue;
    }
    scan.build(data, node_rows, inbag, subdistribution, lo, hi, coef, event_at);
    if (scan.events < 2.0 * min_events) {
      make_terminal(job);
      continue;
    }
    const std::size_t nt = scan.times.size();

    double best_stat = 1e-12;
    std::size_t best_feature = n_features;
    double best_threshold = 0.0;
    // Candidates in ascending column order; near-equal statistics (relative 1e-10) keep
    // the earlier candidate, so ties resolve to the lowest column and threshold.
    auto picks = rng.sample_without_replacement(n_features, mtry);
    std::sort(picks.begin(), picks.end());
    for (auto f : picks) {
      const auto col = static_cast<Eigen::Index>(f);
      sorted.clear();
      for (auto r : node_rows) sorted.emplace_back(data.x(r, col), r);
      std::sort(sorted.begin(), sorted.end());
      if (sorted.front().first == sorted.back().first) continue;
      da.assign(nt + 1, 0.0);
      db.assign(nt + 1, 0.0);
      dl.assign(nt, 0.0);
      double events_left = 0.0;
      for (std::size_t q = 0; q + 1 < sorted.size(); ++q) {
        const auto r = sorted[q].second;
        const double c = inbag[r];
        da[lo[r]] += c;
        da[hi[r]] -= c;
        if (coef[r] != 0.0) db[hi[r]] += coef[r];
        if (event_at[r] >= 0) {
          dl[static_cast<std::size_t>(event_at[r])] += c;
          events_left += c;
        }
        if (sorted[q].first == sorted[q + 1].first) continue;
        if (events_left < min_events) continue;
        if (scan.events - events_left < min_events) break;
        double a = 0.0, b = 0.0, l = 0.0, v = 0.0;
        for (std::size_t j = 0; j < nt; ++j) {
          a += da[j];
          b += db[j];
          const double y = scan.y_total[j];
          const double d = scan.d_total[j];
          if (!(y > 0.0) || d <= 0.0) continue;
          const double yl = a + scan.g_before[j] * b;
          const double frac = yl / y;
          l += dl[j] - frac * d;
          if (y - d > 0.0) v += frac * (1.0 - frac) * d * (y > 1.0 ? (y - d) / (y - 1.0) : 1.0);
        }
        if (!(v > 0.0)) continue;
        const double stat = l * l / v;
        if (stat > best_stat * (1.0 + 1e-10)) {
          best_stat = stat;
          best_feature = f;
          const double x0 = sorted[q].first, x1 = sorted[q + 1].first;
          double mid = x0 + (x1 - x0) / 2.0;
          if (!(mid < x1)) mid = x0;
          best_threshold = mid;
        }
      }
    }
    if (best_feature == n_features) {
      make_terminal(job);
      continue;
    }

    const auto col = static_cast<Eigen::Index>(best_feature);
    const auto mid_it = std::stable_partition(rows.begin() + static_cast<std::ptrdiff_t>(job.begin),
                                              rows.begin() + static_cast<std::ptrdiff_t>(job.end),
                                              [&](std::uint32_t r) { return data.x(r, col) <= best_threshold; });
    const std::size_t split = static_cast<std::size_t>(mid_it - rows.begin());
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

double default_horizon(const ForestData& data) {
  std::vector<double> ages;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.event[i] == EventKind::dementia) ages.push_back(data.exit[i]);
  }
  if (ages.empty()) throw Error(ErrorCode::NoEvents, "no dementia events");
  return quantile(ages, 0.90);
}

Forest grow_forest(ForestData data, const ForestConfig& cfg) {
  if (data.size() < 2) throw Error(ErrorCode::EmptySample, "a forest needs at least two subjects");
  if (std::none_of(data.event.begin(), data.event.end(), [](EventKind e) { return e == EventKind::dementia; })) {
    throw Error(ErrorCode::NoEvents, "no dementia events in the training data");
  }
  if (cfg.n_trees == 0) throw Error(ErrorCode::InvalidArgument, "n_trees must be >= 1");
  if (data.censoring.ages.empty() && data.censoring.survival.empty()) data.prepare();
  Forest forest;
  forest.config = cfg;
  forest.horizon = std::isnan(cfg.vimp_horizon) ? default_horizon(data) : cfg.vimp_horizon;
  forest.data = std::move(data);
  forest.trees.resize(cfg.n_trees);
  const auto& d = forest.data;
  parallel_for(cfg.n_trees, cfg.threads, [&](std::size_t t) {
    Rng rng(derive_seed(cfg.seed, {t}));
    const auto inbag = draw_bootstrap(d.size(), cfg.weighted_bootstrap ? std::span<const double>(d.weight) : std::span<const double>(), rng);
    forest.trees[t] = grow_tree(d, inbag, cfg, rng, forest.horizon);
  });
  return forest;
}

survival::CifCurve predict_cif(const Forest& forest, std::span<const double> x) {
  if (x.size() != forest.data.n_predictors()) throw Error(ErrorCode::DimensionMismatch, "covariate vector has the wrong length");
  std::vector<const TerminalCif*> reached;
  reached.reserve(forest.trees.size());
  std::vector<double> grid;
  for (const auto& tree : forest.trees) {
    const auto* t = &tree.terminals[tree.drop(x)];
    reached.push_back(t);
    grid.insert(grid.end(), t->ages.begin(), t->ages.end());
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  survival::CifCurve out;
  out.ages = grid;
  out.cif[0].assign(grid.size(), 0.0);
  out.cif[1].assign(grid.size(), 0.0);
  for (const auto* t : reached) {
    std::size_t k = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      while (k < t->ages.size() && t->ages[k] <= grid[g]) ++k;
      if (k == 0) continue;
      out.cif[0][g] += t->dementia[k - 1];
      out.cif[1][g] += t->death[k - 1];
    }
  }
  const double m = static_cast<double>(reached.size());
  out.survival.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out.cif[0][g] /= m;
    out.cif[1][g] /= m;
    out.survival[g] = 1.0 - out.cif[0][g] - out.cif[1][g];
  }
  return out;
}

double concordance(std::span<const double> scores, std::span<const double> entry, std::span<const double> exit,
                   std::span<const EventKind> event, std::span<const double> weight, double horizon,
                   std::span<const std::uint8_t> use) {
  const std::size_t n = scores.size();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!use.empty() && !use[i]) continue;
    if (event[i] != EventKind::dementia || exit[i] > horizon) continue;
    const double ti = exit[i];
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || (!use.empty() && !use[j])) continue;
      if (!(exit[j] > ti && entry[j] < ti)) continue;
      const double w = weight[i] * weight[j];
      den += w;
      if (scores[i] > scores[j]) {
        num += w;
      } else if (scores[i] == scores[j]) {
        num += 0.5 * w;
      }
    }
  }
  if (!(den > 0.0)) throw Error(ErrorCode::NoUsablePairs, "no usable pairs for the concordance index");
  return num / den;
}

namespace {

// Per tree: the OOB subjects and the terminal value each reaches at the horizon.
struct OobTable {
  std::vector<std::vector<std::uint32_t>> subjects;
  std::vector<std::vector<double>> values;
  std::vector<std::uint32_t> n_oob;
};

OobTable oob_table(const Forest& forest) {
  const auto& d = forest.data;
  OobTable t;
  t.subjects.resize(forest.trees.size());
  t.values.resize(forest.trees.size());
  parallel_for(forest.trees.size(), forest.config.threads, [&](std::size_t k) {
    const auto& tree = forest.trees[k];
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (tree.inbag[i] != 0) continue;
      t.subjects[k].push_back(static_cast<std::uint32_t>(i));
      t.values[k].push_back(tree.terminals[tree.drop(d.x, static_cast<Eigen::Index>(i))].at_horizon);
    }
  });
  t.n_oob.assign(d.size(), 0);
  for (const auto& s : t.subjects)
    for (auto i : s) ++t.n_oob[i];
  return t;
}

OobScores scores_from(const OobTable& table, const std::vector<std::vector<double>>& values, std::size_t n) {
  OobScores out;
  out.score.assign(n, 0.0);
  for (std::size_t k = 0; k < table.subjects.size(); ++k) {
    for (std::size_t q = 0; q < table.subjects[k].size(); ++q) out.score[table.subjects[k][q]] += values[k][q];
  }
  out.usable.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.usable[i] = table.n_oob[i] > 0 ? 1 : 0;
    if (out.usable[i]) out.score[i] /= table.n_oob[i];
  }
  return out;
}

double error_of(const Forest& forest, const OobScores& s) {
  const auto& d = forest.data;
  return 1.0 - concordance(s.score, d.entry, d.exit, d.event, d.weight, forest.horizon, s.usable);
}

}  // namespace

OobScores oob_scores(const Forest& forest) {
  const auto table = oob_table(forest);
  return scores_from(table, table.values, forest.data.size());
}

double oob_error(const Forest& forest, std::vector<std::string>* warnings) {
  const auto s = oob_scores(forest);
  const auto dropped = static_cast<std::size_t>(std::count(s.usable.begin(), s.usable.end(), 0));
  if (dropped > 0 && warnings) {
    warnings->push_back(fmt::format("{} subject(s) were in-bag for every tree and are left out of the OOB error", dropped));
  }
  return error_of(forest, s);
}

void rank_vimp(VimpTable& table) {
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const VimpRow& a, const VimpRow& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.predictor < b.predictor;
  });
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    table.rows[k].rank = k + 1;
    table.rows[k].negative = table.rows[k].importance < 0.0;
  }
}

VimpTable vimp(const Forest& forest) {
  const auto& d = forest.data;
  const std::size_t n = d.size();
  const std::size_t m = d.n_predictors();
  const auto table = oob_table(forest);
  const auto base = scores_from(table, table.values, n);
  const double baseline = error_of(forest, base);
  const std::size_t reps = std::max<std::size_t>(forest.config.vimp_repetitions, 1);

  std::vector<std::vector<bool>> uses(forest.trees.size(), std::vector<bool>(m, false));
  for (std::size_t k = 0; k < forest.trees.size(); ++k) {
    for (const auto& node : forest.trees[k].nodes) {
      if (node.feature >= 0) uses[k][static_cast<std::size_t>(node.feature)] = true;
    }
  }

  std::vector<double> importance(m, 0.0);
  parallel_for(m, forest.config.threads, [&](std::size_t j) {
    double total = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      std::vector<std::uint32_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(derive_seed(forest.config.seed, {0x76696d70ULL, j, r}));
      rng.shuffle(std::span<std::uint32_t>(perm));
      auto values = table.values;
      for (std::size_t k = 0; k < forest.trees.size(); ++k) {
        if (!uses[k][j]) continue;
        const auto& tree = forest.trees[k];
        for (std::size_t q = 0; q < table.subjects[k].size(); ++q) {
          const auto i = table.subjects[k][q];
          const double v = d.x(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(j));
          values[k][q] = tree.terminals[tree.drop(d.x, static_cast<Eigen::Index>(i), static_cast<std::int32_t>(j), v)].at_horizon;
        }
      }
      total += error_of(forest, scores_from(table, values, n));
    }
    importance[j] = total / static_cast<double>(reps) - baseline;
  });

  VimpTable out;
  out.stratum = d.stratum;
  out.baseline_error = baseline;
  for (std::size_t j = 0; j < m; ++j) {
    out.rows.push_back({d.names[j], j < d.domains.size() ? d.domains[j] : std::string(), importance[j], 0, false});
  }
  rank_vimp(out);
  return out;
}

}  // namespace crisk::forest

// cereal hooks
namespace crisk::survival {
template <class Archive>
void serialize(Archive& ar, SurvCurve& c) {
  ar(c.ages, c.survival);
}
}  // namespace crisk::survival

namespace crisk::forest {

template <class Archive>
void serialize(Archive& ar, ForestConfig& c) {
  ar(c.n_trees, c.mtry, c.min_terminal_events, c.max_depth, c.seed, c.split_rule, c.vimp_horizon, c.weighted_bootstrap,
     c.vimp_repetitions);
}

template <class Archive>
void serialize(Archive& ar, TerminalCif& t) {
  ar(t.ages, t.dementia, t.death, t.at_horizon);
}

template <class Archive>
void serialize(Archive& ar, SurvNode& n) {
  ar(n.feature, n.threshold, n.left, n.right, n.terminal);
}

template <class Archive>
void serialize(Archive& ar, SurvTree& t) {
  ar(t.nodes, t.terminals, t.inbag);
}

template <class Archive>
void save(Archive& ar, const ForestData& d) {
  std::vector<double> x(d.x.data(), d.x.data() + d.x.size());
  std::vector<std::uint8_t> ev;
  for (auto e : d.event) ev.push_back(static_cast<std::uint8_t>(e));
  ar(static_cast<std::uint64_t>(d.x.rows()), static_cast<std::uint64_t>(d.x.cols()), x, d.entry, d.exit, d.weight, ev,
     d.names, d.domains, d.stratum, d.censoring);
}

template <class Archive>
void load(Archive& ar, ForestData& d) {
  std::uint64_t rows = 0, cols = 0;
  std::vector<double> x;
  std::vector<std::uint8_t> ev;
  ar(rows, cols, x, d.entry, d.exit, d.weight, ev, d.names, d.domains, d.stratum, d.censoring);
  if (x.size() != rows * cols) throw Error(ErrorCode::Parse, "forest file: covariate block has the wrong size");
  d.x = Eigen::Map<Eigen::MatrixXd>(x.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  d.event.clear();
  for (auto e : ev) {
    if (e > 2) throw Error(ErrorCode::Parse, "forest file: bad event code");
    d.event.push_back(static_cast<EventKind>(e));
  }
}

namespace {
constexpr char kMagic[] = "CRISK-FOREST";
constexpr std::uint32_t kFormatVersion = 1;
}  // namespace

void save_forest(const std::string& path, const Forest& forest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  cereal::PortableBinaryOutputArchive ar(out);
  ar(kFormatVersion, forest.config, forest.horizon, forest.data, forest.trees, forest.warnings);
}

Forest load_forest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  Forest f;
  try {
    char magic[sizeof kMagic] = {};
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + sizeof magic, kMagic)) {
      throw Error(ErrorCode::Parse, "'" + path + "' is not a forest file");
    }
    cereal::PortableBinaryInputArchive ar(in);
    std::uint32_t version = 0;
    ar(version);
    if (version != kFormatVersion) throw Error(ErrorCode::Parse, fmt::format("unsupported forest format version {}", version));
    ar(f.config, f.horizon, f.data, f.trees, f.warnings);
  } catch (const cereal::Exception& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  } catch (const std::bad_alloc&) {
    throw Error(ErrorCode::Parse, path + ": corrupt forest file");
  }
  return f;
}

}  // namespace crisk::forest
