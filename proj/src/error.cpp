#include "mm/error.hpp"

namespace mm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::UnsupportedInterleave: return "UnsupportedInterleave";
    case ErrorCode::MalformedWavelengthList: return "MalformedWavelengthList";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidGeometry: return "InvalidGeometry";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::MalformedTable: return "MalformedTable";
    case ErrorCode::AllZeroSignature: return "AllZeroSignature";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateClass: return "DegenerateClass";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DegenerateWindow: return "DegenerateWindow";
    case ErrorCode::MissingClassStats: return "MissingClassStats";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::BadGeometry: return "BadGeometry";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::NonFiniteCost: return "NonFiniteCost";
    case ErrorCode::TooFewPredictions: return "TooFewPredictions";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::ResolutionMismatch: return "ResolutionMismatch";
    case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::InsufficientPairs: return "InsufficientPairs";
    case ErrorCode::NonInvertibleHomography: return "NonInvertibleHomography";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace mm
