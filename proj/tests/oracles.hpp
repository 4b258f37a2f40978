// Independent reference computations used by the unit and acceptance suites. Nothing
// here calls into the library's estimators.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "crisk/rng.hpp"
#include "crisk/types.hpp"

namespace oracle {

using crisk::EventKind;

struct Cohort {
  std::vector<double> entry, exit, weight, x;
  std::vector<EventKind> event;
  std::vector<std::size_t> cluster;

  std::size_t size() const { return entry.size(); }
};

inline bool at_risk(const Cohort& c, std::size_t i, double t) { return c.entry[i] < t && t <= c.exit[i]; }

/// Product-limit estimate evaluated just before `t`, counting `kind` as the event.
inline double km_before(const Cohort& c, EventKind kind, double t) {
  std::vector<double> ages;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.event[i] == kind && c.exit[i] < t) ages.push_back(c.exit[i]);
  }
  std::sort(ages.begin(), ages.end());
  ages.erase(std::unique(ages.begin(), ages.end()), ages.end());
  double s = 1.0;
  for (double a : ages) {
    double d = 0.0, y = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c.event[i] == kind && c.exit[i] == a) d += c.weight[i];
      if (at_risk(c, i, a)) y += c.weight[i];
    }
    s *= 1.0 - d / y;
  }
  return s;
}

/// Weighted Breslow partial log-likelihood, one predictor, evaluated directly from the
/// definition: each event contributes w_i [beta x_i - log sum_k w_k(t) exp(beta x_k)].
inline double partial_loglik(const Cohort& c, double beta, EventKind cause, bool subdistribution) {
  double ll = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.event[i] != cause || c.weight[i] <= 0.0) continue;
    const double t = c.exit[i];
    double denom = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      double w = 0.0;
      if (at_risk(c, k, t)) {
        w = c.weight[k];
      } else if (subdistribution && c.event[k] != EventKind::censored && c.event[k] != cause && c.exit[k] < t) {
        w = c.weight[k] * km_before(c, EventKind::censored, t) / km_before(c, EventKind::censored, c.exit[k]);
      }
      denom += w * std::exp(beta * c.x[k]);
    }
    ll += c.weight[i] * (beta * c.x[i] - std::log(denom));
  }
  return ll;
}

/// Maximizes a 1-D concave function: grid with the given step over [lo, hi], then
/// golden-section refinement inside the bracketing cell pair.
inline double grid_golden_max(const std::function<double(double)>& f, double lo, double hi, double step) {
  double best = lo;
  double best_val = -std::numeric_limits<double>::infinity();
  for (double b = lo; b <= hi; b += step) {
    const double v = f(b);
    if (v > best_val) {
      best_val = v;
      best = b;
    }
  }
  double a = best - step, z = best + step;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c1 = z - phi * (z - a), c2 = a + phi * (z - a);
  double f1 = f(c1), f2 = f(c2);
  for (int it = 0; it < 200 && z - a > 1e-12; ++it) {
    if (f1 < f2) {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + phi * (z - a);
      f2 = f(c2);
    } else {
      z = c2;
      c2 = c1;
      f2 = f1;
      c1 = z - phi * (z - a);
      f1 = f(c1);
    }
  }
  return 0.5 * (a + z);
}

/// Small random cohort with left truncation, ties, random weights and a binary or
/// continuous covariate.
inline Cohort random_cohort(std::uint64_t seed, std::size_t n, bool binary_x, bool allow_death, bool allow_censoring,
                            bool integer_ages = true) {
  crisk::Rng rng(seed);
  Cohort c;
  for (std::size_t i = 0; i < n; ++i) {
    const double entry = integer_ages ? 50.0 + static_cast<double>(rng.below(5)) : 50.0 + 5.0 * rng.uniform();
    const double len = integer_ages ? 1.0 + static_cast<double>(rng.below(10)) : 0.5 + 10.0 * rng.uniform();
    c.entry.push_back(entry);
    c.exit.push_back(entry + len);
    const double u = rng.uniform();
    EventKind e = EventKind::dementia;
    if (allow_death && u < 0.3) e = EventKind::death;
    if (allow_censoring && u > 0.75) e = EventKind::censored;
    c.event.push_back(e);
    c.weight.push_back(0.5 + rng.uniform());
    c.x.push_back(binary_x ? (rng.bernoulli(0.5) ? 1.0 : -1.0) : rng.normal());
    c.cluster.push_back(i / 2);
  }
  return c;
}

}  // namespace oracle
