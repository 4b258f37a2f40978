#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "crisk/cohort.hpp"
#include "crisk/csv.hpp"

namespace crisk::pipeline {

/// Baseline cumulative hazard rate * (age - origin)^shape; shape 1 is a constant hazard.
struct HazardSpec {
  double rate = 0.0;
  double shape = 1.0;
};

struct SynthConfig {
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  std::size_t n_predictors = 10;
  std::size_t n_binary = 5;  // the first n_binary columns are +-1, the rest standard normal
  double entry_min = 60.0;
  double entry_max = 75.0;
  double age_origin = 50.0;
  HazardSpec dementia{0.02, 1.0};
  HazardSpec death{0.02, 1.0};
  std::vector<double> beta_dementia;  // empty = all zero
  std::vector<double> beta_death;
  double censoring_rate = 0.0;  // per year of follow-up
  double max_followup = std::numeric_limits<double>::infinity();
  std::size_t max_household = 2;  // household sizes uniform on 1..max_household
  double weight_sigma = 0.0;      // lognormal weights with mean 1
  double missing_rate = 0.0;      // MCAR per covariate cell
  std::array<double, 4> stratum_share = {0.25, 0.25, 0.25, 0.25};
};

struct SynthCohort {
  AnalysisTable table;
  SynthConfig truth;
};

/// Latent cause-specific times by inverting each cumulative hazard from the entry age;
/// the earliest of dementia, death, censoring and the follow-up cap is observed.
/// Throws InfeasibleConfig.
SynthCohort synth_cohort(const SynthConfig& cfg);

/// Subject-wave rows accepted by cohort::build_cohort: waves every `interval` years
/// from entry plus one at exit. Binary covariates are written as yes/no.
CsvTable synth_long_format(const SynthCohort& cohort, double interval = 2.0);

}  // namespace crisk::pipeline
