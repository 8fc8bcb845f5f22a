#pragma once

#include "patchgen/model/generators.hpp"

#include <string>
#include <vector>

namespace patchgen::train {

struct ComplexityRow {
  model::GeneratorKind kind = model::GeneratorKind::mlp;
  Eigen::Index patches = 0;
  model::GeneratorParamCounts counts;
  /// Scalars found by instantiating the generator in a store (0 when skipped).
  std::size_t store_count = 0;
  bool verified = false;
};

/// Generators above this many parameters are counted analytically only.
inline constexpr std::size_t kComplexityInstantiateLimit = 5'000'000;

/// One row per (kind, k) pair, in the order given.
std::vector<ComplexityRow> complexity_report(const model::GeneratorConfig& base,
                                             const std::vector<model::GeneratorKind>& kinds,
                                             const std::vector<Eigen::Index>& patch_counts);

std::string format_complexity(const std::vector<ComplexityRow>& rows);

}  // namespace patchgen::train
