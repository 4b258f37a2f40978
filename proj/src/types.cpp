#include "crisk/error.hpp"
#include "crisk/types.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace crisk {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConstantColumn: return "ConstantColumn";
    case ErrorCode::TooFewValues: return "TooFewValues";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::BaselineDemented: return "BaselineDemented";
    case ErrorCode::NonMonotoneAges: return "NonMonotoneAges";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::RankDeficientPCs: return "RankDeficientPCs";
    case ErrorCode::AllMissingColumn: return "AllMissingColumn";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::NonIdentifiable: return "NonIdentifiable";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoUsablePairs: return "NoUsablePairs";
    case ErrorCode::InconsistentPredictorSets: return "InconsistentPredictorSets";
    case ErrorCode::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string_view to_string(EventKind e) noexcept {
  switch (e) {
    case EventKind::censored: return "censored";
    case EventKind::dementia: return "dementia";
    case EventKind::death: return "death";
  }
  return "censored";
}

std::string_view to_string(Stratum s) noexcept {
  switch (s) {
    case Stratum::nhw_men: return "NHW-men";
    case Stratum::nhw_women: return "NHW-women";
    case Stratum::nhb_men: return "NHB-men";
    case Stratum::nhb_women: return "NHB-women";
  }
  return "NHW-men";
}

std::string_view to_string(Domain d) noexcept {
  switch (d) {
    case Domain::sociodemographic: return "sociodemographic";
    case Domain::early_life: return "early-life";
    case Domain::economic: return "economic";
    case Domain::health: return "health";
    case Domain::behaviors: return "behaviors";
    case Domain::social: return "social";
    case Domain::genetic: return "genetic";
  }
  return "health";
}

std::string_view to_string(CodingKind k) noexcept {
  return k == CodingKind::binary_pm1 ? "binary_pm1" : "standardized_continuous";
}

std::string_view to_string(RawTransform t) noexcept { return t == RawTransform::log ? "log" : "none"; }

namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

EventKind parse_event(std::string_view text) {
  const auto t = lower(text);
  if (t == "censored" || t == "0") return EventKind::censored;
  if (t == "dementia" || t == "1") return EventKind::dementia;
  if (t == "death" || t == "2") return EventKind::death;
  throw Error(ErrorCode::Parse, "unknown event kind '" + std::string(text) + "'");
}

Stratum parse_stratum(std::string_view text) {
  const auto t = lower(text);
  for (auto s : kAllStrata) {
    if (t == lower(to_string(s))) return s;
  }
  throw Error(ErrorCode::Parse, "unknown stratum '" + std::string(text) + "'");
}

Domain parse_domain(std::string_view text) {
  const auto t = lower(text);
  for (int i = 0; i <= static_cast<int>(Domain::genetic); ++i) {
    const auto d = static_cast<Domain>(i);
    if (t == to_string(d)) return d;
  }
  if (t == "early_life") return Domain::early_life;
  if (t == "social ties" || t == "social_ties") return Domain::social;
  throw Error(ErrorCode::Parse, "unknown domain '" + std::string(text) + "'");
}

CodingKind parse_coding_kind(std::string_view text) {
  const auto t = lower(text);
  if (t == "binary_pm1" || t == "binary") return CodingKind::binary_pm1;
  if (t == "standardized_continuous" || t == "continuous") return CodingKind::standardized_continuous;
  throw Error(ErrorCode::Parse, "unknown coding kind '" + std::string(text) + "'");
}

RawTransform parse_transform(std::string_view text) {
  const auto t = lower(text);
  if (t.empty() || t == "none") return RawTransform::none;
  if (t == "log") return RawTransform::log;
  throw Error(ErrorCode::Parse, "unknown transform '" + std::string(text) + "'");
}

}  // namespace crisk
