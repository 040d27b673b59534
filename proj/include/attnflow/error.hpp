#pragma once

#include <stdexcept>
#include <string>

namespace attnflow {

// Stable error identifiers. The C API maps these one-to-one onto af_status.
enum class ErrorCode {
  InvalidArgument = 1,
  Config,
  DimensionMismatch,
  NonInvertibleStep,
  MissingFeedForward,
  UnsupportedHeads,
  InvalidPermutation,
  OverflowGuard,
  NonFinite,
  NonConvergence,
  NotSymmetric,
  NotPSD,
  AllNegInfinity,
  NotStochastic,
  TooManyVertices,
  NotConverged,
  NotGoodTriple,
  NotParanormal,
  ComplexEigenvalue,
  WrongVariant,
  ZeroPerturbation,
  SizeMismatch,
  MissingArtifacts,
  UnknownSuite,
  UnknownAnalyzer,
  UnknownScenario,
  Io,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace attnflow
