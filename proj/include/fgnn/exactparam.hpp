#pragma once

#include <utility>
#include <vector>

#include "fgnn/decomp.hpp"
#include "fgnn/fgnn.hpp"
#include "fgnn/graph.hpp"

namespace fgnn {

// ReLU net computing x -> max_j x_j exactly, as a binary tournament of
// max(a,b) = relu(a-b) + relu(b) - relu(-b). Depth is exactly
// 2*ceil(log2 n) layers and every hidden layer has at most 2n units; both
// bounds are audited at build time.
DenseNet build_max_net(int n);

// Constant-tensor gadget recovering column sums of a non-negative m x n
// matrix through a max reduction: y_ik = sum_j x_ij w_ijk routes row i into
// block i, yhat_k = max_i y_ik concatenates the rows, and q * yhat re-sums
// the blocks.
struct SumViaMaxGadget {
  int m = 0;
  int n = 0;
  Tensor w;  // [m, n, m*n]
  Tensor q;  // [n, m*n]

  // Column sums of x (shape [m, n]); throws std::domain_error when any
  // entry is negative, since the max reduction needs non-negative blocks.
  std::vector<double> apply(const Tensor& x) const;
};

SumViaMaxGadget build_sum_via_max(int m, int n);

// Fixed dimensions and layouts shared by the emulator builders below. All
// feature blocks are padded to the graph-wide maxima so one shared M net
// serves every edge.
struct EmulatorLayout {
  int max_card = 0;       // widest variable cardinality
  int max_arity = 0;      // widest factor scope
  int max_z = 0;          // largest joint configuration count
  int max_degree = 0;     // most factors incident to one variable
  int num_edges = 0;
  int table_block = 0;    // per-slot table size: max_card * max_z
  int tables_width = 0;   // max_arity * table_block (one polarity half)

  std::vector<std::vector<int>> factor_slots;   // factor -> variable index per slot
  std::vector<std::vector<int>> var_factors;    // variable -> incident factor indices
  std::vector<int> edge_of;                     // flattened (factor, slot) -> edge row

  static EmulatorLayout analyze(const FactorGraph& g);

  int g0_width() const { return max_z; }                            // flattened theta_c
  int f0_width() const { return max_card; }                         // theta_i
  int g_bp_width() const { return 2 * tables_width + max_arity * max_z; }
  int f_bp_width() const { return max_card + max_degree * max_card; }
};

// Feature recipe for the exact construction: node rows are the (shifted)
// variable log-potentials, factor rows the flattened factor tensors, edge
// rows one-hot edge identifiers.
FeatureSet emulator_features(const FactorGraph& g);

// One FGNN layer turning flattened factor tensors into the decomposition
// tables, stored per factor as positive/negative block halves (the gating
// construction max-aggregates only non-negative payloads, so table entries
// travel as pos - neg). De-blocking the output reproduces decompose_factor's
// tables. Requires every factor log-potential >= 1.
std::pair<FgnnLayerParams, FeatureSet> build_decomposition_layer(const FactorGraph& g);

// Stack whose forward pass on emulator_features(g) equals k synchronous
// decomposed max-product iterations: the decomposition layer, k FGNN layers
// (each one BP iteration; the trailing summation is absorbed into the next
// layer's M net), and a final linear readout producing the beliefs.
// Requires variable log-potentials >= 0 and factor log-potentials >= 1
// (see shift_for_decomposition).
FgnnStack build_bp_emulator(const FactorGraph& g, int k);

// stack_forward on the recipe features, sliced to per-variable belief
// vectors of the true cardinalities.
std::vector<std::vector<double>> emulator_beliefs(const FgnnStack& stack, const FactorGraph& g);

}  // namespace fgnn
