#include "fgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace fgnn {

FactorGraph::FactorGraph(std::vector<VariableNode> variables, std::vector<FactorNode> factors)
    : variables_(std::move(variables)), factors_(std::move(factors)) {
  int min_id = 0, max_id = -1;
  for (const auto& v : variables_) {
    min_id = std::min(min_id, v.id);
    max_id = std::max(max_id, v.id);
  }
  min_id_ = min_id;
  id_to_index_.assign(static_cast<std::size_t>(max_id - min_id + 1), -1);
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    int slot = variables_[i].id - min_id_;
    if (id_to_index_[static_cast<std::size_t>(slot)] != -1)
      throw StructureError("duplicate variable id " + std::to_string(variables_[i].id));
    id_to_index_[static_cast<std::size_t>(slot)] = static_cast<int>(i);
  }
  validate();
}

int FactorGraph::var_index(int id) const {
  int slot = id - min_id_;
  if (slot < 0 || slot >= static_cast<int>(id_to_index_.size()) ||
      id_to_index_[static_cast<std::size_t>(slot)] < 0)
    throw StructureError("unknown variable id " + std::to_string(id));
  return id_to_index_[static_cast<std::size_t>(slot)];
}

void FactorGraph::validate() const {
  for (const auto& v : variables_) {
    if (v.cardinality < 2) throw StructureError("variable cardinality must be >= 2");
    if (static_cast<int>(v.log_potential.size()) != v.cardinality)
      throw ShapeError("variable log-potential length does not match cardinality");
    for (double x : v.log_potential)
      if (!std::isfinite(x)) throw StructureError("variable log-potential must be finite");
  }
  for (const auto& f : factors_) {
    std::set<int> seen(f.scope.begin(), f.scope.end());
    if (seen.size() != f.scope.size()) throw StructureError("factor scope has duplicate variables");
    auto cards = scope_cardinalities(f);
    if (f.log_potential.shape() != cards)
      throw ShapeError("factor tensor shape does not match scope cardinalities");
    for (double x : f.log_potential.values())
      if (!std::isfinite(x)) throw StructureError("factor log-potential must be finite");
  }
}

std::vector<int> FactorGraph::scope_cardinalities(const FactorNode& f) const {
  std::vector<int> cards;
  cards.reserve(f.scope.size());
  for (int id : f.scope) cards.push_back(variable_by_id(id).cardinality);
  return cards;
}

std::vector<std::pair<int, int>> FactorGraph::edges() const {
  std::vector<std::pair<int, int>> e;
  for (int c = 0; c < num_factors(); ++c)
    for (int id : factors_[static_cast<std::size_t>(c)].scope) e.emplace_back(c, var_index(id));
  return e;
}

std::vector<std::vector<int>> FactorGraph::factors_of_variables() const {
  std::vector<std::vector<int>> incident(static_cast<std::size_t>(num_variables()));
  for (int c = 0; c < num_factors(); ++c)
    for (int id : factors_[static_cast<std::size_t>(c)].scope)
      incident[static_cast<std::size_t>(var_index(id))].push_back(c);
  return incident;
}

bool FactorGraph::valid_assignment(const Assignment& a) const {
  if (static_cast<int>(a.states.size()) != num_variables()) return false;
  for (int i = 0; i < num_variables(); ++i) {
    int s = a.states[static_cast<std::size_t>(i)];
    if (s < 0 || s >= variables_[static_cast<std::size_t>(i)].cardinality) return false;
  }
  return true;
}

double score(const FactorGraph& g, const Assignment& a) {
  if (static_cast<int>(a.states.size()) != g.num_variables())
    throw std::out_of_range("assignment length does not match variable count");
  double total = 0.0;
  std::vector<int> idx;
  for (const auto& f : g.factors()) {
    idx.clear();
    for (int id : f.scope) idx.push_back(a.states[static_cast<std::size_t>(g.var_index(id))]);
    total += f.log_potential.at(idx);
  }
  for (int i = 0; i < g.num_variables(); ++i) {
    const auto& v = g.variables()[static_cast<std::size_t>(i)];
    int s = a.states[static_cast<std::size_t>(i)];
    if (s < 0 || s >= v.cardinality) throw std::out_of_range("assignment state out of range");
    total += v.log_potential[static_cast<std::size_t>(s)];
  }
  return total;
}

FactorGraph nonneg_shift(const FactorGraph& g) {
  std::vector<VariableNode> vars = g.variables();
  std::vector<FactorNode> factors = g.factors();
  for (auto& v : vars) {
    double m = *std::min_element(v.log_potential.begin(), v.log_potential.end());
    for (double& x : v.log_potential) x -= m;
  }
  for (auto& f : factors) {
    double m = f.log_potential.min();
    for (double& x : f.log_potential.values()) x -= m;
  }
  return FactorGraph(std::move(vars), std::move(factors));
}

ShiftedGraph shift_for_decomposition(const FactorGraph& g) {
  std::vector<VariableNode> vars = g.variables();
  std::vector<FactorNode> factors = g.factors();
  double offset = 0.0;
  for (auto& v : vars) {
    double m = *std::min_element(v.log_potential.begin(), v.log_potential.end());
    for (double& x : v.log_potential) x -= m;
    offset -= m;
  }
  for (auto& f : factors) {
    double m = f.log_potential.min();
    for (double& x : f.log_potential.values()) x += 1.0 - m;
    offset += 1.0 - m;
  }
  return {FactorGraph(std::move(vars), std::move(factors)), offset};
}

}  // namespace fgnn
