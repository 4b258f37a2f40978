#include "crisk/synth.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "crisk/error.hpp"
#include "crisk/rng.hpp"

namespace crisk::pipeline {

namespace {

void check(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InfeasibleConfig, what);
}

// Age at which the cumulative hazard, scaled by exp(eta), grows by `e` past `entry`.
double latent_age(const HazardSpec& h, double origin, double entry, double eta, double e) {
  if (h.rate <= 0.0) return std::numeric_limits<double>::infinity();
  const double start = h.rate * std::pow(entry - origin, h.shape);
  const double target = start + e * std::exp(-eta);
  return origin + std::pow(target / h.rate, 1.0 / h.shape);
}

}  // namespace

SynthCohort synth_cohort(const SynthConfig& cfg) {
  const std::size_t m = cfg.n_predictors;
  check(cfg.n > 0, "n must be positive");
  check(cfg.n_binary <= m, "n_binary exceeds n_predictors");
  check(cfg.beta_dementia.empty() || cfg.beta_dementia.size() == m, "beta_dementia needs one entry per predictor");
  check(cfg.beta_death.empty() || cfg.beta_death.size() == m, "beta_death needs one entry per predictor");
  check(cfg.dementia.rate >= 0.0 && cfg.death.rate >= 0.0 && cfg.censoring_rate >= 0.0, "hazards must be >= 0");
  check(cfg.dementia.shape > 0.0 && cfg.death.shape > 0.0, "hazard shapes must be > 0");
  check(cfg.dementia.rate > 0.0 || cfg.death.rate > 0.0, "all event hazards are zero");
  check(cfg.entry_min > cfg.age_origin || (cfg.entry_min >= cfg.age_origin && cfg.dementia.shape >= 1.0 && cfg.death.shape >= 1.0),
        "entry ages must not precede the hazard origin");
  check(cfg.entry_max >= cfg.entry_min, "entry_max < entry_min");
  check(cfg.max_followup > 0.0, "max_followup must be > 0");
  check(cfg.max_household >= 1, "max_household must be >= 1");
  check(cfg.weight_sigma >= 0.0, "weight_sigma must be >= 0");
  check(cfg.missing_rate >= 0.0 && cfg.missing_rate < 1.0, "missing_rate must be in [0, 1)");
  double share_total = 0.0;
  for (double s : cfg.stratum_share) {
    check(s >= 0.0, "stratum shares must be >= 0");
    share_total += s;
  }
  check(share_total > 0.0, "stratum shares sum to zero");

  Rng rng(cfg.seed);
  SynthCohort out;
  out.truth = cfg;
  out.truth.beta_dementia.resize(m, 0.0);
  out.truth.beta_death.resize(m, 0.0);
  auto& table = out.table;
  for (std::size_t j = 0; j < m; ++j) {
    CovariateSpec spec;
    spec.name = fmt::format("x{}", j + 1);
    spec.kind = j < cfg.n_binary ? CodingKind::binary_pm1 : CodingKind::standardized_continuous;
    table.specs.push_back(spec);
  }

  std::size_t household = 0, left_in_household = 0;
  std::vector<std::size_t> missing_count(m, 0);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    Subject s;
    s.id = fmt::format("s{:06d}", i + 1);
    if (left_in_household == 0) {
      ++household;
      left_in_household = 1 + static_cast<std::size_t>(rng.below(cfg.max_household));
    }
    --left_in_household;
    s.household_id = fmt::format("h{:06d}", household);

    double u = rng.uniform() * share_total;
    std::size_t k = 0;
    while (k + 1 < cfg.stratum_share.size() && u >= cfg.stratum_share[k]) u -= cfg.stratum_share[k++];
    s.stratum = kAllStrata[k];

    s.covariates.resize(m);
    double eta_d = 0.0, eta_m = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double x = j < cfg.n_binary ? (rng.bernoulli(0.5) ? 1.0 : -1.0) : rng.normal();
      s.covariates[j] = x;
      eta_d += out.truth.beta_dementia[j] * x;
      eta_m += out.truth.beta_death[j] * x;
    }
    s.entry_age = cfg.entry_min + (cfg.entry_max - cfg.entry_min) * rng.uniform();
    const double t_dem = latent_age(cfg.dementia, cfg.age_origin, s.entry_age, eta_d, rng.exponential());
    const double t_death = latent_age(cfg.death, cfg.age_origin, s.entry_age, eta_m, rng.exponential());
    const double t_cens = cfg.censoring_rate > 0.0 ? s.entry_age + rng.exponential() / cfg.censoring_rate
                                                   : std::numeric_limits<double>::infinity();
    const double t_admin = s.entry_age + cfg.max_followup;
    s.exit_age = std::min({t_dem, t_death, t_cens, t_admin});
    check(std::isfinite(s.exit_age), "no finite exit age");
    s.event = s.exit_age == t_dem ? EventKind::dementia : s.exit_age == t_death ? EventKind::death : EventKind::censored;

    s.base_weight = cfg.weight_sigma > 0.0
                        ? std::exp(cfg.weight_sigma * rng.normal() - 0.5 * cfg.weight_sigma * cfg.weight_sigma)
                        : 1.0;
    s.analysis_weight = s.base_weight;
    if (cfg.missing_rate > 0.0) {
      for (std::size_t j = 0; j < m; ++j) {
        if (rng.bernoulli(cfg.missing_rate)) {
          s.covariates[j] = kMissing;
          ++missing_count[j];
        }
      }
    }
    table.subjects.push_back(std::move(s));
  }
  for (std::size_t j = 0; j < m; ++j) {
    table.specs[j].missing_fraction = static_cast<double>(missing_count[j]) / static_cast<double>(cfg.n);
  }
  return out;
}

CsvTable synth_long_format(const SynthCohort& cohort, double interval) {
  if (!(interval > 0.0)) throw Error(ErrorCode::InvalidArgument, "wave interval must be > 0");
  const auto& table = cohort.table;
  CsvTable csv;
  csv.header = {"id", "household_id", "stratum", "interview_age", "respondent_kind",
                "self_score", "proxy_score", "vital_status", "base_weight"};
  for (const auto& spec : table.specs) csv.header.push_back(spec.name);
  Rng rng(derive_seed(cohort.truth.seed, {0x6c6f6e67ULL}));
  for (const auto& s : table.subjects) {
    std::vector<std::string> covs;
    for (std::size_t j = 0; j < table.specs.size(); ++j) {
      const double v = s.covariates[j];
      if (is_missing(v)) {
        covs.emplace_back();
      } else if (table.specs[j].kind == CodingKind::binary_pm1) {
        covs.emplace_back(v > 0.0 ? "yes" : "no");
      } else {
        covs.push_back(format_double(v));
      }
    }
    auto wave = [&](double age, const std::string& kind, const std::string& score, const std::string& vital) {
      std::vector<std::string> row = {s.id, s.household_id, std::string(to_string(s.stratum)), format_double(age),
                                      kind, score, "", vital, format_double(s.base_weight)};
      row.insert(row.end(), covs.begin(), covs.end());
      csv.rows.push_back(std::move(row));
    };
    auto healthy = [&] { return std::to_string(cohort::kSelfDementiaMax + 1 + rng.below(15)); };
    for (double age = s.entry_age; age < s.exit_age; age += interval) wave(age, "self", healthy(), "alive");
    switch (s.event) {
      case EventKind::dementia:
        wave(s.exit_age, "self", std::to_string(rng.below(cohort::kSelfDementiaMax + 1)), "alive");
        break;
      case EventKind::death:
        wave(s.exit_age, "", "", "dead");
        break;
      case EventKind::censored:
        wave(s.exit_age, "self", healthy(), "alive");
        break;
    }
  }
  return csv;
}

}  // namespace crisk::pipeline
