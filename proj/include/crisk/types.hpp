#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crisk {

/// Missing cells are carried as quiet NaN throughout the toolkit.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return std::isnan(v); }

enum class EventKind : std::uint8_t { censored = 0, dementia = 1, death = 2 };

enum class Stratum : std::uint8_t { nhw_men = 0, nhw_women = 1, nhb_men = 2, nhb_women = 3 };

inline constexpr std::array<Stratum, 4> kAllStrata = {Stratum::nhw_men, Stratum::nhw_women,
                                                      Stratum::nhb_men, Stratum::nhb_women};

enum class Domain : std::uint8_t {
  sociodemographic,
  early_life,
  economic,
  health,
  behaviors,
  social,
  genetic,
};

enum class CodingKind : std::uint8_t { binary_pm1, standardized_continuous };

/// Raw-value transform applied before standardization.
enum class RawTransform : std::uint8_t { none, log };

struct CovariateSpec {
  std::string name;
  Domain domain = Domain::health;
  CodingKind kind = CodingKind::standardized_continuous;
  bool reverse_coded = false;
  double missing_fraction = 0.0;
  /// Raw input column; empty means same as `name`.
  std::string source_column;
  RawTransform transform = RawTransform::none;
  /// When set, rows where this binary column is "yes" are coded 0 and left out of the
  /// standardization moments (age at first/last birth for the childless).
  std::string zero_when;
  /// Predictor defined only for women (menarche/menopause PGS).
  bool female_only = false;

  const std::string& source() const { return source_column.empty() ? name : source_column; }
};

struct Subject {
  std::string id;
  std::string household_id;
  Stratum stratum = Stratum::nhw_men;
  double entry_age = 0.0;
  double exit_age = 0.0;
  EventKind event = EventKind::censored;
  std::vector<double> covariates;
  double base_weight = 1.0;
  double analysis_weight = 1.0;
  /// Pass-through columns, aligned with the owning table's `extra_columns`.
  std::vector<std::string> extras;
};

std::string_view to_string(EventKind e) noexcept;
std::string_view to_string(Stratum s) noexcept;
std::string_view to_string(Domain d) noexcept;
std::string_view to_string(CodingKind k) noexcept;
std::string_view to_string(RawTransform t) noexcept;

EventKind parse_event(std::string_view text);
Stratum parse_stratum(std::string_view text);
Domain parse_domain(std::string_view text);
CodingKind parse_coding_kind(std::string_view text);
RawTransform parse_transform(std::string_view text);

inline bool is_male(Stratum s) noexcept { return s == Stratum::nhw_men || s == Stratum::nhb_men; }

}  // namespace crisk
