#pragma once

#include "patfeti/structure.hpp"

#include <cstdint>

namespace patfeti {

/// Independent forces for every occurrence, uniform in [−1, 1] per free dof,
/// drawn from std::mt19937_64 seeded with `seed`, occurrence by occurrence.
/// Floating occurrences are not balanced.
[[nodiscard]] LoadCase random_load(const StructureModel& model, std::uint64_t seed);

/// One random draw per pattern, replicated on every occurrence of that
/// pattern (in its own frame). On a periodic ring this gives a load that is
/// invariant under the cyclic permutation.
[[nodiscard]] LoadCase periodic_load(const StructureModel& model, std::uint64_t seed);

}  // namespace patfeti
