#pragma once

#include <vector>

#include "crisk/types.hpp"

namespace crisk {

/// The 65 dementia risk factors with their coding conventions, plus the four health
/// items dropped for high missingness. Missing fractions are the published baseline
/// values; `build_cohort` recomputes them from data.
std::vector<CovariateSpec> risk_factor_catalog();

}  // namespace crisk
