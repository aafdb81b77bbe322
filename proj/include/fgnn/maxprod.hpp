#pragma once

#include <utility>
#include <vector>

#include "fgnn/decomp.hpp"
#include "fgnn/graph.hpp"

namespace fgnn {

enum class BpMode { direct, decomposed };

// State of one max-product run. node_beliefs[i] has length K_i. In direct
// mode factor_messages[c][s] is the factor-to-variable message over the
// states of scope variable s (length K); in decomposed mode it is the
// per-slot message over the auxiliary configuration variable (length |Z_c|).
struct BeliefState {
  std::vector<std::vector<double>> node_beliefs;
  std::vector<std::vector<std::vector<double>>> factor_messages;
};

// b_i = theta_i, all messages zero (the update rule itself does not
// prescribe an initialization).
BeliefState bp_init(const FactorGraph& g);
BeliefState bp_init_decomposed(const FactorGraph& g, const std::vector<DecomposedFactor>& d);

// One synchronous update: every message is computed from the previous
// beliefs, then every belief from the new messages. The message sums over
// the full beliefs of the other scope variables; `cavity` switches to the
// form that subtracts this factor's own previous message from them.
BeliefState bp_iterate(const FactorGraph& g, const BeliefState& s, bool cavity = false);

// Synchronous update in the decomposed form: messages live on the auxiliary
// variable, beliefs are completed by maximizing table rows against them.
// `d` must reconstruct g's factors exactly for this to match bp_iterate.
BeliefState bp_iterate_decomposed(const FactorGraph& g, const std::vector<DecomposedFactor>& d,
                                  const BeliefState& s);

// Per-variable argmax of the beliefs, ties to the smallest state index.
Assignment decode(const BeliefState& s);

// k synchronous iterations from bp_init, then decode. Decomposed mode
// derives its tables with decompose_graph. The cavity toggle applies to
// direct mode only.
std::pair<BeliefState, Assignment> run_max_product(const FactorGraph& g, int k,
                                                   BpMode mode = BpMode::direct,
                                                   bool cavity = false);

}  // namespace fgnn
