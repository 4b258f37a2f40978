#pragma once

#include <span>
#include <vector>

namespace crisk {

/// Mean computed as first + mean(x - first): exact for constant input.
double stable_mean(std::span<const double> values);

/// Sample quantile with linear interpolation between order statistics (R type 7).
/// `values` need not be sorted. Requires a nonempty input.
double quantile(std::vector<double> values, double prob);

/// Weighted mean; zero total weight yields NaN.
double weighted_mean(std::span<const double> values, std::span<const double> weights);

}  // namespace crisk
