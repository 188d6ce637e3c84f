#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace capsum {

enum class Errc {
  // ingestion
  ParseError,
  SchemaError,
  BadMagic,
  TruncatedFile,
  ZeroNormRow,
  IOError,
  TemplateError,
  EmptyCaption,
  ClientError,
  // numerics
  DimensionMismatch,
  ZeroNormVector,
  EmptyScene,
  TooFewScenes,
  MissingDiversity,
  NonPositiveSigma,
  InvalidSceneCount,
  LengthMismatch,
  InvalidBudget,
  InconsistentSelection,
  NonFiniteLoss,
  KinkProximity,
  DegenerateInput,
  EmptySelection,
  EmptyGroundTruth,
  // cli
  ConfigError,
};

constexpr std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::ParseError: return "ParseError";
    case Errc::SchemaError: return "SchemaError";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::ZeroNormRow: return "ZeroNormRow";
    case Errc::IOError: return "IOError";
    case Errc::TemplateError: return "TemplateError";
    case Errc::EmptyCaption: return "EmptyCaption";
    case Errc::ClientError: return "ClientError";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ZeroNormVector: return "ZeroNormVector";
    case Errc::EmptyScene: return "EmptyScene";
    case Errc::TooFewScenes: return "TooFewScenes";
    case Errc::MissingDiversity: return "MissingDiversity";
    case Errc::NonPositiveSigma: return "NonPositiveSigma";
    case Errc::InvalidSceneCount: return "InvalidSceneCount";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::InvalidBudget: return "InvalidBudget";
    case Errc::InconsistentSelection: return "InconsistentSelection";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::KinkProximity: return "KinkProximity";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::EmptySelection: return "EmptySelection";
    case Errc::EmptyGroundTruth: return "EmptyGroundTruth";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace capsum
