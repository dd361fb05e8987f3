#pragma once

#include <compare>
#include <cstddef>
#include <string>

#include "recon/graph.hpp"

namespace recon {

/// Permutation-invariant byte identity of a categorical graph. Two graphs
/// produce equal keys iff they are isomorphic respecting node and edge
/// categories. The exact-match primitive behind uniqueness and the
/// reconstruction rate.
struct CanonicalKey {
  std::string bytes;
  auto operator<=>(const CanonicalKey&) const = default;
};

/// Canonical form via color refinement (node category + edge-category
/// multiset) followed by backtracking over the surviving candidates, taking
/// the lexicographically smallest serialization. Throws std::runtime_error
/// if the search exceeds `budget` refinement calls; it never returns a wrong
/// key.
CanonicalKey canonical_key(const CategoricalGraph& g,
                           std::size_t budget = 200000);

}  // namespace recon
