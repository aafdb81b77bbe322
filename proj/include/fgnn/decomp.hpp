#pragma once

#include <vector>

#include "fgnn/graph.hpp"

namespace fgnn {

// Max-decomposition of a factor into per-variable tables over an auxiliary
// configuration variable z: the factor tensor is recovered as
// max_z sum_i table_i(x_i, z). z enumerates joint scope configurations in
// row-major order, so z_cardinality is the full configuration count.
struct DecomposedFactor {
  int factor_id = 0;
  std::vector<int> scope_cardinalities;
  int z_cardinality = 0;
  std::vector<Tensor> tables;  // one per scope variable, shape [K_i, z_cardinality]
  double penalty = 0.0;        // mismatch entry magnitude used at build time
  double offset = 0.0;         // constant folded out of the tables (0 for the strict form)
};

// Strict construction. Requires every log-potential entry >= 1 (apply
// nonneg_shift plus a +1 offset first); throws std::domain_error otherwise.
// Matching entries hold theta(x^z)/|s(c)|; mismatches hold -P with
// P = |s(c)| * max|theta| + 1, which exceeds anything a matched sum reaches.
DecomposedFactor decompose_factor(const FactorNode& f);

// Same construction applied to an arbitrary factor: internally shifts the
// tensor into the >= 1 domain, then folds the shift back out of the tables so
// the reconstruction equals the original tensor. The folded constant is
// recorded in `offset` (0 when no shift was needed).
DecomposedFactor decompose_factor_any(const FactorNode& f);

// Decompose every factor of the graph with decompose_factor_any, in factor order.
std::vector<DecomposedFactor> decompose_graph(const FactorGraph& g);

// max_z sum_i table_i(x_i, z), as a tensor over the scope. For tables built
// by either constructor above this recovers the original factor tensor.
Tensor reconstruct(const DecomposedFactor& d);

}  // namespace fgnn
