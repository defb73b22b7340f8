#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace osim {

enum class ErrorKind {
  FileNotFound,
  UnsupportedModelFormat,
  UnknownFeatureLayer,
  EmptyImage,
  InferenceFailure,
  NonFiniteFeatures,
  ShapeMismatch,
  EmptyRecordSet,
  BoxOutOfBounds,
  NoObjectsDetected,
  PairingMismatch,
  DimensionMismatch,
  TooSmall,
  StepOutOfRange,
  DegenerateAnchors,
  UnknownColumn,
  ConstantSeries,
  LengthMismatch,
  MalformedRow,
  OutOfRangeMOS,
  InvalidConfig,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::UnsupportedModelFormat: return "UnsupportedModelFormat";
    case ErrorKind::UnknownFeatureLayer: return "UnknownFeatureLayer";
    case ErrorKind::EmptyImage: return "EmptyImage";
    case ErrorKind::InferenceFailure: return "InferenceFailure";
    case ErrorKind::NonFiniteFeatures: return "NonFiniteFeatures";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyRecordSet: return "EmptyRecordSet";
    case ErrorKind::BoxOutOfBounds: return "BoxOutOfBounds";
    case ErrorKind::NoObjectsDetected: return "NoObjectsDetected";
    case ErrorKind::PairingMismatch: return "PairingMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::StepOutOfRange: return "StepOutOfRange";
    case ErrorKind::DegenerateAnchors: return "DegenerateAnchors";
    case ErrorKind::UnknownColumn: return "UnknownColumn";
    case ErrorKind::ConstantSeries: return "ConstantSeries";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::OutOfRangeMOS: return "OutOfRangeMOS";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library. `kind()` is the stable,
/// machine-checkable part; `what()` carries the human-readable context.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace osim
