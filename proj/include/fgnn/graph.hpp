#pragma once

#include <utility>
#include <vector>

#include "fgnn/tensor.hpp"

namespace fgnn {

// Hard-constraint log-potential value. Finite so BP and the tensor
// decomposition stay in ordinary arithmetic; it dwarfs any achievable score
// in generated data.
inline constexpr double kHardPenalty = -1.0e4;

struct VariableNode {
  int id = 0;
  int cardinality = 2;
  std::vector<double> log_potential;  // length = cardinality
};

struct FactorNode {
  int id = 0;
  std::vector<int> scope;  // ordered variable ids, no duplicates
  Tensor log_potential;    // shape = cardinalities of the scope, row-major
};

struct Assignment {
  std::vector<int> states;  // per-variable state index, variable order

  bool operator==(const Assignment& o) const { return states == o.states; }
};

// Bipartite factor graph. Variables and factors are stored in insertion
// order; the edge set is derived from factor scopes, never stored.
class FactorGraph {
 public:
  FactorGraph() = default;
  FactorGraph(std::vector<VariableNode> variables, std::vector<FactorNode> factors);

  const std::vector<VariableNode>& variables() const { return variables_; }
  const std::vector<FactorNode>& factors() const { return factors_; }

  int num_variables() const { return static_cast<int>(variables_.size()); }
  int num_factors() const { return static_cast<int>(factors_.size()); }

  // Position of the variable with the given id; throws StructureError if absent.
  int var_index(int id) const;

  const VariableNode& variable_by_id(int id) const { return variables_[static_cast<std::size_t>(var_index(id))]; }

  // Cardinalities of a factor's scope, in scope order.
  std::vector<int> scope_cardinalities(const FactorNode& f) const;

  // Derived edge list, factor-major in scope order: (factor index, variable index).
  std::vector<std::pair<int, int>> edges() const;

  // Factors incident to each variable (by index), in factor order.
  std::vector<std::vector<int>> factors_of_variables() const;

  bool valid_assignment(const Assignment& a) const;

 private:
  void validate() const;

  std::vector<VariableNode> variables_;
  std::vector<FactorNode> factors_;
  std::vector<int> id_to_index_;  // dense map; -1 for unused ids
  int min_id_ = 0;
};

// Sum of factor and variable log-potentials at `a`; throws std::out_of_range
// on an invalid state index.
double score(const FactorGraph& g, const Assignment& a);

// Subtracts the per-node minimum from every variable and factor log-potential.
// Preserves the argmax set of `score`; shifts every score by the constant
// sum of the minima.
FactorGraph nonneg_shift(const FactorGraph& g);

// nonneg_shift followed by +1 on every factor log-potential, which is the
// domain the tensor decomposition requires. score(shifted, a) =
// score(g, a) + score_offset for every assignment.
struct ShiftedGraph {
  FactorGraph graph;
  double score_offset = 0.0;
};
ShiftedGraph shift_for_decomposition(const FactorGraph& g);

}  // namespace fgnn
