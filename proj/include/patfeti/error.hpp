#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace patfeti {

enum class Errc {
  NotSymmetric,
  IndefiniteMatrix,
  DimensionMismatch,
  NegativeEigenvalueBeyondTolerance,
  InvalidGeometry,
  InterfaceMismatch,
  NotElastic,
  NodeNotFound,
  InvalidTopology,
  MixedPatterns,
  SingularCoarseGram,
  MaxIterationsExceeded,
  BreakdownZeroDenominator,
  TotalRankCollapse,
  TopologyMismatch,
  SingularGlobalMatrix,
  ConfigError,
};

std::string_view to_string(Errc code) noexcept;

/// Library-wide exception. `code()` identifies the failure class; `what()`
/// carries the human readable context.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace patfeti
