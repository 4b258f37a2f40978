#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crisk {

enum class ErrorCode {
  // cohort
  ConstantColumn,
  TooFewValues,
  ScoreOutOfRange,
  InvalidRecord,
  BaselineDemented,
  NonMonotoneAges,
  EmptyHistory,
  RankDeficientPCs,
  // impute
  AllMissingColumn,
  EmptyMatrix,
  // weights
  Separation,
  Singular,
  NotConverged,
  // survival
  EmptyCohort,
  ZeroVariance,
  NoEvents,
  NonIdentifiable,
  SingularInformation,
  // forest
  EmptySample,
  DimensionMismatch,
  NoUsablePairs,
  // pipeline
  InconsistentPredictorSets,
  InfeasibleConfig,
  // plumbing
  InvalidArgument,
  Parse,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace crisk
