#pragma once

#include "fgnn/graph.hpp"

namespace fgnn {

struct MapResult {
  Assignment assignment;
  double score = 0.0;
};

// Exhaustive exact MAP. Ties break to the lexicographically smallest
// assignment (variable 0 most significant). Throws CapacityError when the
// joint state space exceeds 2^24.
MapResult brute_force_map(const FactorGraph& g);

// Exact MAP for binary chains whose factor scopes are consecutive index
// ranges of width <= window. DP state is the last (window-1) variable
// values, oldest variable in the most significant bit; ties break toward the
// smaller binary value of the state word. Throws StructureError when the
// graph does not have the required chain structure.
MapResult window_dp_map(const FactorGraph& g, int window);

// Exact MAP for pairwise chains (every factor scope is some (i, i+1)),
// arbitrary cardinalities. Same tie-breaking direction as window_dp_map:
// earlier-variable states win ties toward smaller values.
MapResult viterbi_chain_map(const FactorGraph& g);

}  // namespace fgnn
