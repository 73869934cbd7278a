#include "patfeti/error.hpp"

namespace patfeti {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::IndefiniteMatrix: return "IndefiniteMatrix";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NegativeEigenvalueBeyondTolerance: return "NegativeEigenvalueBeyondTolerance";
    case Errc::InvalidGeometry: return "InvalidGeometry";
    case Errc::InterfaceMismatch: return "InterfaceMismatch";
    case Errc::NotElastic: return "NotElastic";
    case Errc::NodeNotFound: return "NodeNotFound";
    case Errc::InvalidTopology: return "InvalidTopology";
    case Errc::MixedPatterns: return "MixedPatterns";
    case Errc::SingularCoarseGram: return "SingularCoarseGram";
    case Errc::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case Errc::BreakdownZeroDenominator: return "BreakdownZeroDenominator";
    case Errc::TotalRankCollapse: return "TotalRankCollapse";
    case Errc::TopologyMismatch: return "TopologyMismatch";
    case Errc::SingularGlobalMatrix: return "SingularGlobalMatrix";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace patfeti
