#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mm {

enum class ErrorCode {
  // hsi_io
  MissingField,
  UnsupportedInterleave,
  MalformedWavelengthList,
  OutOfBounds,
  IoFailure,
  InvalidGeometry,
  // spectra
  EmptySelection,
  MalformedTable,
  AllZeroSignature,
  // landcover / slf
  DimensionMismatch,
  DegenerateClass,
  NotPositiveDefinite,
  DegenerateWindow,
  MissingClassStats,
  ZeroDenominator,
  // detector
  BadGeometry,
  OddDimension,
  // matchloss
  NonFiniteCost,
  TooFewPredictions,
  DegenerateBox,
  ResolutionMismatch,
  EmptyGroundTruth,
  // annotate
  DegenerateConfiguration,
  InsufficientPairs,
  NonInvertibleHomography,
  // generic
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as mm::Error. The message is prefixed with the
// code name so CLI output stays greppable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace mm
