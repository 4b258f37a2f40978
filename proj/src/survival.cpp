#include "crisk/survival.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "crisk/error.hpp"

namespace crisk::survival {

namespace {

bool counts_as_event(EventKind kind, EventTarget target) {
  switch (target) {
    case EventTarget::all_cause: return kind != EventKind::censored;
    case EventTarget::dementia: return kind == EventKind::dementia;
    case EventTarget::death: return kind == EventKind::death;
    case EventTarget::censoring: return kind == EventKind::censored;
  }
  return false;
}

std::size_t step_index(const std::vector<double>& ages, double age) {
  // Number of steps at or before `age`.
  return static_cast<std::size_t>(std::upper_bound(ages.begin(), ages.end(), age) - ages.begin());
}

}  // namespace

RiskSetIndex RiskSetIndex::from_arrays(std::span<const double> entry, std::span<const double> exit,
                                       std::span<const EventKind> event, std::span<const double> weight,
                                       std::span<const std::size_t> cluster) {
  const std::size_t n = entry.size();
  if (n == 0) throw Error(ErrorCode::EmptyCohort, "risk-set index needs at least one subject");
  if (exit.size() != n || event.size() != n || weight.size() != n || (!cluster.empty() && cluster.size() != n)) {
    throw Error(ErrorCode::DimensionMismatch, "subject arrays differ in length");
  }
  RiskSetIndex idx;
  idx.entry_.assign(entry.begin(), entry.end());
  idx.exit_.assign(exit.begin(), exit.end());
  idx.event_.assign(event.begin(), event.end());
  idx.weight_.assign(weight.begin(), weight.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (!(exit[i] > entry[i])) throw Error(ErrorCode::InvalidArgument, fmt::format("subject {}: exit age must exceed entry age", i));
    if (!(weight[i] >= 0.0)) throw Error(ErrorCode::InvalidArgument, fmt::format("subject {}: negative weight", i));
  }

  // Compress cluster labels to 0..k-1 in order of first appearance.
  idx.cluster_.resize(n);
  if (cluster.empty()) {
    std::iota(idx.cluster_.begin(), idx.cluster_.end(), std::size_t{0});
    idx.n_clusters_ = n;
  } else {
    std::unordered_map<std::size_t, std::size_t> remap;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = remap.try_emplace(cluster[i], remap.size());
      idx.cluster_[i] = it->second;
    }
    idx.n_clusters_ = remap.size();
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return exit[a] < exit[b]; });
  idx.exit_offsets_.push_back(0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    if (idx.times_.empty() || exit[i] != idx.times_.back()) {
      if (!idx.times_.empty()) idx.exit_offsets_.push_back(idx.exit_subjects_.size());
      idx.times_.push_back(exit[i]);
    }
    idx.exit_subjects_.push_back(i);
    if (event[i] != EventKind::censored && (idx.event_ages_.empty() || idx.event_ages_.back() != exit[i])) {
      idx.event_ages_.push_back(exit[i]);
    }
  }
  idx.exit_offsets_.push_back(idx.exit_subjects_.size());

  idx.sorted_entry_ = idx.entry_;
  idx.sorted_exit_ = idx.exit_;
  std::sort(idx.sorted_entry_.begin(), idx.sorted_entry_.end());
  std::sort(idx.sorted_exit_.begin(), idx.sorted_exit_.end());
  return idx;
}

RiskSetIndex RiskSetIndex::build(std::span<const Subject> subjects) {
  std::vector<double> entry, exit, weight;
  std::vector<EventKind> event;
  std::vector<std::size_t> cluster;
  std::unordered_map<std::string, std::size_t> households;
  for (const auto& s : subjects) {
    entry.push_back(s.entry_age);
    exit.push_back(s.exit_age);
    event.push_back(s.event);
    weight.push_back(s.analysis_weight);
    auto [it, inserted] = households.try_emplace(s.household_id, households.size());
    cluster.push_back(it->second);
  }
  return from_arrays(entry, exit, event, weight, cluster);
}

std::span<const std::size_t> RiskSetIndex::exits_at(std::size_t k) const {
  return std::span<const std::size_t>(exit_subjects_).subspan(exit_offsets_[k], exit_offsets_[k + 1] - exit_offsets_[k]);
}

std::size_t RiskSetIndex::n_at_risk(double age) const {
  const auto entered = std::lower_bound(sorted_entry_.begin(), sorted_entry_.end(), age) - sorted_entry_.begin();
  const auto left = std::lower_bound(sorted_exit_.begin(), sorted_exit_.end(), age) - sorted_exit_.begin();
  return static_cast<std::size_t>(entered - left);
}

std::vector<std::size_t> RiskSetIndex::at_risk_set(double age) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (at_risk(i, age)) out.push_back(i);
  }
  return out;
}

double RiskSetIndex::weight_at_risk(double age) const {
  double y = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    if (at_risk(i, age)) y += weight_[i];
  }
  return y;
}

double SurvCurve::value_at(double age) const {
  const auto k = step_index(ages, age);
  return k == 0 ? 1.0 : survival[k - 1];
}

double SurvCurve::value_before(double age) const {
  const auto k = static_cast<std::size_t>(std::lower_bound(ages.begin(), ages.end(), age) - ages.begin());
  return k == 0 ? 1.0 : survival[k - 1];
}

SurvCurve kaplan_meier(const RiskSetIndex& idx, EventTarget target) {
  SurvCurve curve;
  double s = 1.0;
  for (std::size_t k = 0; k < idx.times().size(); ++k) {
    const double t = idx.times()[k];
    double d = 0.0;
    for (auto i : idx.exits_at(k)) {
      if (counts_as_event(idx.event()[i], target)) d += idx.weight()[i];
    }
    if (d <= 0.0) continue;
    const double y = idx.weight_at_risk(t);
    s *= 1.0 - d / y;
    curve.ages.push_back(t);
    curve.survival.push_back(s);
  }
  return curve;
}

double CifCurve::value_at(EventKind cause, double age) const {
  const auto k = step_index(ages, age);
  return k == 0 ? 0.0 : cif[cause_slot(cause)][k - 1];
}

CifCurve aalen_johansen(const RiskSetIndex& idx) {
  CifCurve curve;
  double s = 1.0;
  std::array<double, kCauseCount> acc{0.0, 0.0};
  for (std::size_t k = 0; k < idx.times().size(); ++k) {
    const double t = idx.times()[k];
    std::array<double, kCauseCount> d{0.0, 0.0};
    for (auto i : idx.exits_at(k)) {
      const auto e = idx.event()[i];
      if (e != EventKind::censored) d[cause_slot(e)] += idx.weight()[i];
    }
    const double d_all = d[0] + d[1];
    if (d_all <= 0.0) continue;
    const double y = idx.weight_at_risk(t);
    for (std::size_t c = 0; c < kCauseCount; ++c) acc[c] += s * d[c] / y;
    s *= 1.0 - d_all / y;
    curve.ages.push_back(t);
    for (std::size_t c = 0; c < kCauseCount; ++c) curve.cif[c].push_back(acc[c]);
    curve.survival.push_back(s);
  }
  return curve;
}

double RiskSetDesign::total_event_weight() const {
  return std::accumulate(event_weights.begin(), event_weights.end(), 0.0);
}

namespace {

RiskSetDesign empty_design(const RiskSetIndex& idx) {
  RiskSetDesign d;
  d.n_subjects = idx.size();
  d.cluster.assign(idx.cluster().begin(), idx.cluster().end());
  d.n_clusters = idx.n_clusters();
  d.event_offsets.push_back(0);
  d.risk_offsets.push_back(0);
  return d;
}

}  // namespace

RiskSetDesign cause_specific_design(const RiskSetIndex& idx, EventKind cause) {
  if (cause == EventKind::censored) throw Error(ErrorCode::InvalidArgument, "cause must be dementia or death");
  auto d = empty_design(idx);
  for (std::size_t k = 0; k < idx.times().size(); ++k) {
    const double t = idx.times()[k];
    bool any = false;
    for (auto i : idx.exits_at(k)) {
      if (idx.event()[i] == cause && idx.weight()[i] > 0.0) {
        d.event_subjects.push_back(i);
        d.event_weights.push_back(idx.weight()[i]);
        any = true;
      }
    }
    if (!any) continue;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx.at_risk(i, t) && idx.weight()[i] > 0.0) {
        d.risk_subjects.push_back(i);
        d.risk_weights.push_back(idx.weight()[i]);
      }
    }
    d.times.push_back(t);
    d.event_offsets.push_back(d.event_subjects.size());
    d.risk_offsets.push_back(d.risk_subjects.size());
  }
  return d;
}

namespace {

// Left limit of G, falling back to the last positive value once G has reached zero.
double positive_before(const SurvCurve& g, double age, bool& degenerate) {
  auto k = static_cast<std::size_t>(std::lower_bound(g.ages.begin(), g.ages.end(), age) - g.ages.begin());
  while (k > 0 && g.survival[k - 1] <= 0.0) {
    degenerate = true;
    --k;
  }
  return k == 0 ? 1.0 : g.survival[k - 1];
}

}  // namespace

double FineGrayWeights::weight(double competing_exit, double age) const {
  bool flag = false;
  const double num = positive_before(censoring, age, flag);
  const double den = positive_before(censoring, competing_exit, flag);
  return num / den;
}

FineGrayWeights fine_gray_weights(const RiskSetIndex& idx) {
  FineGrayWeights w;
  w.censoring = kaplan_meier(idx, EventTarget::censoring);
  const double last_event = idx.event_ages().empty() ? -std::numeric_limits<double>::infinity() : idx.event_ages().back();
  for (std::size_t k = 0; k < w.censoring.ages.size(); ++k) {
    if (w.censoring.survival[k] <= 0.0 && w.censoring.ages[k] < last_event) w.degenerate = true;
  }
  return w;
}

RiskSetDesign fine_gray_design(const RiskSetIndex& idx, EventKind cause) {
  if (cause == EventKind::censored) throw Error(ErrorCode::InvalidArgument, "cause must be dementia or death");
  const auto g = fine_gray_weights(idx);
  auto d = empty_design(idx);
  bool degenerate = false;
  for (std::size_t k = 0; k < idx.times().size(); ++k) {
    const double t = idx.times()[k];
    bool any = false;
    for (auto i : idx.exits_at(k)) {
      if (idx.event()[i] == cause && idx.weight()[i] > 0.0) {
        d.event_subjects.push_back(i);
        d.event_weights.push_back(idx.weight()[i]);
        any = true;
      }
    }
    if (!any) continue;
    const double g_t = positive_before(g.censoring, t, degenerate);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double w = idx.weight()[i];
      if (!(w > 0.0)) continue;
      if (idx.at_risk(i, t)) {
        d.risk_subjects.push_back(i);
        d.risk_weights.push_back(w);
      } else if (idx.exit()[i] < t && idx.event()[i] != EventKind::censored && idx.event()[i] != cause) {
        const double ratio = g_t / positive_before(g.censoring, idx.exit()[i], degenerate);
        d.risk_subjects.push_back(i);
        d.risk_weights.push_back(w * ratio);
      }
    }
    d.times.push_back(t);
    d.event_offsets.push_back(d.event_subjects.size());
    d.risk_offsets.push_back(d.risk_subjects.size());
  }
  if (degenerate) {
    d.warnings.push_back("DegenerateCensoringCurve: censoring survival reached 0 before the last event age; "
                         "weights use the last positive value");
  }
  return d;
}

LikelihoodEval evaluate(const RiskSetDesign& design, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  const auto p = x.cols();
  if (static_cast<std::size_t>(x.rows()) != design.n_subjects || beta.size() != p) {
    throw Error(ErrorCode::DimensionMismatch, "covariate matrix does not match the design");
  }
  LikelihoodEval out;
  out.score = Eigen::VectorXd::Zero(p);
  out.information = Eigen::MatrixXd::Zero(p, p);
  const Eigen::VectorXd eta = x * beta;

  Eigen::VectorXd s1(p), xbar(p), xi(p);
  Eigen::MatrixXd s2(p, p);
  for (std::size_t j = 0; j < design.n_times(); ++j) {
    const auto r0 = design.risk_offsets[j], r1 = design.risk_offsets[j + 1];
    double shift = -std::numeric_limits<double>::infinity();
    for (auto r = r0; r < r1; ++r) shift = std::max(shift, eta(static_cast<Eigen::Index>(design.risk_subjects[r])));
    double s0 = 0.0;
    s1.setZero();
    s2.setZero();
    for (auto r = r0; r < r1; ++r) {
      const auto i = static_cast<Eigen::Index>(design.risk_subjects[r]);
      const double w = design.risk_weights[r] * std::exp(eta(i) - shift);
      s0 += w;
      xi = x.row(i).transpose();
      s1.noalias() += w * xi;
      s2.noalias() += w * xi * xi.transpose();
    }
    double dj = 0.0;
    for (auto e = design.event_offsets[j]; e < design.event_offsets[j + 1]; ++e) {
      const auto i = static_cast<Eigen::Index>(design.event_subjects[e]);
      const double w = design.event_weights[e];
      dj += w;
      out.loglik += w * eta(i);
      out.score.noalias() += w * x.row(i).transpose();
    }
    xbar = s1 / s0;
    out.loglik -= dj * (shift + std::log(s0));
    out.score.noalias() -= dj * xbar;
    out.information.noalias() += dj * (s2 / s0 - xbar * xbar.transpose());
  }
  return out;
}

Eigen::MatrixXd score_residuals(const RiskSetDesign& design, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  const auto p = x.cols();
  Eigen::MatrixXd res = Eigen::MatrixXd::Zero(x.rows(), p);
  const Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd s1(p), xbar(p);
  for (std::size_t j = 0; j < design.n_times(); ++j) {
    const auto r0 = design.risk_offsets[j], r1 = design.risk_offsets[j + 1];
    double shift = -std::numeric_limits<double>::infinity();
    for (auto r = r0; r < r1; ++r) shift = std::max(shift, eta(static_cast<Eigen::Index>(design.risk_subjects[r])));
    double s0 = 0.0;
    s1.setZero();
    for (auto r = r0; r < r1; ++r) {
      const auto i = static_cast<Eigen::Index>(design.risk_subjects[r]);
      const double w = design.risk_weights[r] * std::exp(eta(i) - shift);
      s0 += w;
      s1.noalias() += w * x.row(i).transpose();
    }
    xbar = s1 / s0;
    double dj = 0.0;
    for (auto e = design.event_offsets[j]; e < design.event_offsets[j + 1]; ++e) {
      const auto i = static_cast<Eigen::Index>(design.event_subjects[e]);
      dj += design.event_weights[e];
      res.row(i) += design.event_weights[e] * (x.row(i) - xbar.transpose());
    }
    for (auto r = r0; r < r1; ++r) {
      const auto i = static_cast<Eigen::Index>(design.risk_subjects[r]);
      const double w = design.risk_weights[r] * std::exp(eta(i) - shift) / s0;
      res.row(i) -= dj * w * (x.row(i) - xbar.transpose());
    }
  }
  return res;
}

Eigen::MatrixXd robust_cluster_variance(const RiskSetDesign& design, const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& beta, const Eigen::MatrixXd& information) {
  const auto p = x.cols();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(information);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularInformation, "information matrix is singular");
  const Eigen::MatrixXd inv = lu.inverse();
  const Eigen::MatrixXd res = score_residuals(design, x, beta);
  Eigen::MatrixXd totals = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(design.n_clusters), p);
  for (Eigen::Index i = 0; i < res.rows(); ++i) totals.row(static_cast<Eigen::Index>(design.cluster[static_cast<std::size_t>(i)])) += res.row(i);
  const Eigen::MatrixXd meat = totals.transpose() * totals;
  return inv * meat * inv;
}

namespace {

// Infinite maximum likelihood for one predictor: every event sits at the extreme of
// its risk set in the same direction.
bool monotone_likelihood(const RiskSetDesign& design, const Eigen::MatrixXd& x) {
  bool all_at_max = true;
  bool all_at_min = true;
  bool any_spread = false;
  for (std::size_t j = 0; j < design.n_times(); ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (auto r = design.risk_offsets[j]; r < design.risk_offsets[j + 1]; ++r) {
      if (!(design.risk_weights[r] > 0.0)) continue;
      const double v = x(static_cast<Eigen::Index>(design.risk_subjects[r]), 0);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo) any_spread = true;
    for (auto e = design.event_offsets[j]; e < design.event_offsets[j + 1]; ++e) {
      const double v = x(static_cast<Eigen::Index>(design.event_subjects[e]), 0);
      if (v != hi) all_at_max = false;
      if (v != lo) all_at_min = false;
    }
  }
  return any_spread && (all_at_max || all_at_min);
}

}  // namespace

MultiFit fit_partial_likelihood(const RiskSetDesign& design, const Eigen::MatrixXd& x, const FitOptions& options) {
  const auto p = x.cols();
  if (design.n_times() == 0 || !(design.total_event_weight() > 0.0)) {
    throw Error(ErrorCode::NoEvents, "no events of the requested cause");
  }
  std::vector<bool> in_risk(design.n_subjects, false);
  for (auto i : design.risk_subjects) in_risk[i] = true;
  for (Eigen::Index c = 0; c < p; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < design.n_subjects; ++i) {
      if (!in_risk[i]) continue;
      const double v = x(static_cast<Eigen::Index>(i), c);
      if (is_missing(v)) throw Error(ErrorCode::InvalidArgument, "missing covariate value");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(hi > lo)) throw Error(ErrorCode::ZeroVariance, fmt::format("covariate {} is constant over the risk sets", c));
  }
  if (p == 1 && monotone_likelihood(design, x)) {
    throw Error(ErrorCode::NonIdentifiable, "monotone partial likelihood: estimate diverges");
  }

  MultiFit fit;
  fit.warnings = design.warnings;
  fit.beta = Eigen::VectorXd::Zero(p);
  auto current = evaluate(design, x, fit.beta);
  fit.loglik_path.push_back(current.loglik);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(current.information);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (ldlt.vectorD().array() <= 1e-14 * std::max(1.0, current.information.diagonal().cwiseAbs().maxCoeff())).any()) {
      throw Error(ErrorCode::SingularInformation, "information matrix is not positive definite");
    }
    Eigen::VectorXd step = ldlt.solve(current.score);
    Eigen::VectorXd trial = fit.beta + step;
    auto next = evaluate(design, x, trial);
    int halvings = 0;
    while (!(next.loglik >= current.loglik) && halvings < 40) {
      step *= 0.5;
      trial = fit.beta + step;
      next = evaluate(design, x, trial);
      ++halvings;
    }
    fit.iterations = iter;
    if (!(next.loglik >= current.loglik)) {
      // No ascent left at machine precision.
      fit.converged = true;
      break;
    }
    const double change = std::abs(next.loglik - current.loglik);
    const double scale = std::max(std::abs(current.loglik), std::numeric_limits<double>::min());
    fit.beta = trial;
    current = std::move(next);
    fit.loglik_path.push_back(current.loglik);
    if (change / scale <= options.tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged) {
    throw Error(ErrorCode::NotConverged, fmt::format("no convergence in {} iterations", options.max_iterations));
  }
  fit.loglik = current.loglik;
  fit.information = current.information;
  fit.robust_covariance = robust_cluster_variance(design, x, fit.beta, fit.information);
  if (design.n_clusters < 2) fit.warnings.push_back("single cluster: robust variance is degenerate (n_clusters=1)");
  return fit;
}

FitResult fit_single(const RiskSetDesign& design, std::span<const double> x, const FitOptions& options) {
  if (x.size() != design.n_subjects) throw Error(ErrorCode::DimensionMismatch, "predictor length differs from cohort size");
  const Eigen::MatrixXd xm = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  auto multi = fit_partial_likelihood(design, xm, options);
  FitResult r;
  r.beta = multi.beta(0);
  r.hr = std::exp(r.beta);
  r.robust_se = std::sqrt(std::max(0.0, multi.robust_covariance(0, 0)));
  r.ci_lo = std::exp(r.beta - 1.96 * r.robust_se);
  r.ci_hi = std::exp(r.beta + 1.96 * r.robust_se);
  r.n_clusters = design.n_clusters;
  r.loglik = multi.loglik;
  r.converged = multi.converged;
  r.iterations = multi.iterations;
  r.n = design.n_subjects;
  r.n_events = design.n_event_subjects();
  r.warnings = std::move(multi.warnings);
  return r;
}

FitResult cox_fit(const RiskSetIndex& idx, std::span<const double> x, EventKind cause, const FitOptions& options) {
  return fit_single(cause_specific_design(idx, cause), x, options);
}

FitResult fine_gray_fit(const RiskSetIndex& idx, std::span<const double> x, EventKind cause, const FitOptions& options) {
  return fit_single(fine_gray_design(idx, cause), x, options);
}

std::string format_hr(const FitResult& fit) {
  return fmt::format("{:.2f} ({:.2f}, {:.2f})", fit.hr, fit.ci_lo, fit.ci_hi);
}

}  // namespace crisk::survival
