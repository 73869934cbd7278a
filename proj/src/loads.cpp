#include "patfeti/loads.hpp"

#include <random>

namespace patfeti {

namespace {

Vector draw(std::mt19937_64& rng, Index n) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vector f(n);
  for (Index i = 0; i < n; ++i) f(i) = unit(rng);
  return f;
}

}  // namespace

LoadCase random_load(const StructureModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LoadCase lc;
  lc.seed = seed;
  for (const Occurrence& o : model.occurrences()) lc.forces.push_back(draw(rng, model.pattern(o.pattern).free_dofs()));
  return lc;
}

LoadCase periodic_load(const StructureModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vector> per_pattern;
  for (int p = 0; p < model.n_patterns(); ++p) per_pattern.push_back(draw(rng, model.pattern(p).free_dofs()));
  LoadCase lc;
  lc.seed = seed;
  for (const Occurrence& o : model.occurrences()) lc.forces.push_back(per_pattern[static_cast<std::size_t>(o.pattern)]);
  return lc;
}

}  // namespace patfeti
