#include "crisk/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crisk/error.hpp"

namespace crisk {

double stable_mean(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double first = values.front();
  double acc = 0.0;
  for (double v : values) acc += v - first;
  return first + acc / static_cast<double>(values.size());
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile probability outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double weighted_mean(std::span<const double> values, std::span<const double> weights) {
  double sw = 0.0;
  double swx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sw += weights[i];
    swx += weights[i] * values[i];
  }
  return sw > 0.0 ? swx / sw : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace crisk
