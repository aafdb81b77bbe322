#include "fgnn/maxprod.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace fgnn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_state_shape(const FactorGraph& g, const BeliefState& s) {
  if (static_cast<int>(s.node_beliefs.size()) != g.num_variables() ||
      static_cast<int>(s.factor_messages.size()) != g.num_factors())
    throw ShapeError("belief state does not match graph");
}

}  // namespace

BeliefState bp_init(const FactorGraph& g) {
  BeliefState s;
  s.node_beliefs.reserve(g.variables().size());
  for (const auto& v : g.variables()) s.node_beliefs.push_back(v.log_potential);
  s.factor_messages.resize(g.factors().size());
  for (int c = 0; c < g.num_factors(); ++c) {
    const auto& f = g.factors()[static_cast<std::size_t>(c)];
    auto& msgs = s.factor_messages[static_cast<std::size_t>(c)];
    msgs.reserve(f.scope.size());
    for (int id : f.scope)
      msgs.emplace_back(static_cast<std::size_t>(g.variable_by_id(id).cardinality), 0.0);
  }
  return s;
}

BeliefState bp_init_decomposed(const FactorGraph& g, const std::vector<DecomposedFactor>& d) {
  if (static_cast<int>(d.size()) != g.num_factors())
    throw ShapeError("decomposition count does not match factor count");
  BeliefState s;
  s.node_beliefs.reserve(g.variables().size());
  for (const auto& v : g.variables()) s.node_beliefs.push_back(v.log_potential);
  s.factor_messages.resize(g.factors().size());
  for (int c = 0; c < g.num_factors(); ++c) {
    const auto& f = g.factors()[static_cast<std::size_t>(c)];
    const auto& dc = d[static_cast<std::size_t>(c)];
    if (dc.tables.size() != f.scope.size())
      throw StructureError("decomposition tables do not match factor scope");
    auto& msgs = s.factor_messages[static_cast<std::size_t>(c)];
    msgs.assign(f.scope.size(), std::vector<double>(static_cast<std::size_t>(dc.z_cardinality), 0.0));
  }
  return s;
}

BeliefState bp_iterate(const FactorGraph& g, const BeliefState& s, bool cavity) {
  check_state_shape(g, s);
  BeliefState next = s;

  for (int c = 0; c < g.num_factors(); ++c) {
    const auto& f = g.factors()[static_cast<std::size_t>(c)];
    const auto cards = g.scope_cardinalities(f);
    const int arity = static_cast<int>(f.scope.size());
    std::vector<int> pos(static_cast<std::size_t>(arity));
    for (int j = 0; j < arity; ++j)
      pos[static_cast<std::size_t>(j)] = g.var_index(f.scope[static_cast<std::size_t>(j)]);

    for (int slot = 0; slot < arity; ++slot) {
      auto& msg = next.factor_messages[static_cast<std::size_t>(c)][static_cast<std::size_t>(slot)];
      std::fill(msg.begin(), msg.end(), kNegInf);
      // One pass over all joint configurations of the scope.
      std::vector<int> idx(static_cast<std::size_t>(arity), 0);
      const std::int64_t n_conf = f.log_potential.size();
      for (std::int64_t conf = 0; conf < n_conf; ++conf) {
        double v = f.log_potential[conf];
        for (int j = 0; j < arity; ++j) {
          if (j == slot) continue;
          const int vi = pos[static_cast<std::size_t>(j)];
          double b = s.node_beliefs[static_cast<std::size_t>(vi)]
                                   [static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
          if (cavity)
            b -= s.factor_messages[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)]
                                  [static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
          v += b;
        }
        auto& cell = msg[static_cast<std::size_t>(idx[static_cast<std::size_t>(slot)])];
        cell = std::max(cell, v);
        for (int j = arity - 1; j >= 0; --j) {
          if (++idx[static_cast<std::size_t>(j)] < cards[static_cast<std::size_t>(j)]) break;
          idx[static_cast<std::size_t>(j)] = 0;
        }
      }
    }
  }

  for (int i = 0; i < g.num_variables(); ++i)
    next.node_beliefs[static_cast<std::size_t>(i)] =
        g.variables()[static_cast<std::size_t>(i)].log_potential;
  for (int c = 0; c < g.num_factors(); ++c) {
    const auto& f = g.factors()[static_cast<std::size_t>(c)];
    for (int slot = 0; slot < static_cast<int>(f.scope.size()); ++slot) {
      const int vi = g.var_index(f.scope[static_cast<std::size_t>(slot)]);
      const auto& msg = next.factor_messages[static_cast<std::size_t>(c)][static_cast<std::size_t>(slot)];
      auto& b = next.node_beliefs[static_cast<std::size_t>(vi)];
      for (std::size_t x = 0; x < b.size(); ++x) b[x] += msg[x];
    }
  }
  return next;
}

BeliefState bp_iterate_decomposed(const FactorGraph& g, const std::vector<DecomposedFactor>& d,
                                  const BeliefState& s) {
  check_state_shape(g, s);
  if (static_cast<int>(d.size()) != g.num_factors())
    throw ShapeError("decomposition count does not match factor count");
  BeliefState next = s;

  for (int c = 0; c < g.num_factors(); ++c) {
    const auto& f = g.factors()[static_cast<std::size_t>(c)];
    const auto& dc = d[static_cast<std::size_t>(c)];
    const int arity = static_cast<int>(f.scope.size());
    if (static_cast<int>(dc.tables.size()) != arity)
      throw StructureError("decomposition tables do not match factor scope");
    const int zc = dc.z_cardinality;

    // Per-slot max-marginals mu_s(z) = max_x [table_s(x, z) + b_x].
    std::vector<std::vector<double>> mu(static_cast<std::size_t>(arity),
                                        std::vector<double>(static_cast<std::size_t>(zc), kNegInf));
    for (int slot = 0; slot < arity; ++slot) {
      const int vi = g.var_index(f.scope[static_cast<std::size_t>(slot)]);
      const auto& b = s.node_beliefs[static_cast<std::size_t>(vi)];
      const auto& tab = dc.tables[static_cast<std::size_t>(slot)];
      if (static_cast<int>(b.size()) != tab.shape()[0])
        throw StructureError("decomposition table rows do not match variable cardinality");
      auto& m = mu[static_cast<std::size_t>(slot)];
      for (int x = 0; x < tab.shape()[0]; ++x)
        for (int z = 0; z < zc; ++z)
          m[static_cast<std::size_t>(z)] =
              std::max(m[static_cast<std::size_t>(z)],
                       tab[static_cast<std::int64_t>(x) * zc + z] + b[static_cast<std::size_t>(x)]);
    }
    for (int slot = 0; slot < arity; ++slot) {
      auto& msg = next.factor_messages[static_cast<std::size_t>(c)][static_cast<std::size_t>(slot)];
      msg.assign(static_cast<std::size_t>(zc), 0.0);
      for (int other = 0; other < arity; ++other) {
        if (other == slot) continue;
        const auto& m = mu[static_cast<std::size_t>(other)];
        for (int z = 0; z < zc; ++z) msg[static_cast<std::size_t>(z)] += m[static_cast<std::size_t>(z)];
      }
    }
  }

  for (int i = 0; i < g.num_variables(); ++i)
    next.node_beliefs[static_cast<std::size_t>(i)] =
        g.variables()[static_cast<std::size_t>(i)].log_potential;
  for (int c = 0; c < g.num_factors(); ++c) {
    const auto& f = g.factors()[static_cast<std::size_t>(c)];
    const auto& dc = d[static_cast<std::size_t>(c)];
    const int zc = dc.z_cardinality;
    for (int slot = 0; slot < static_cast<int>(f.scope.size()); ++slot) {
      const int vi = g.var_index(f.scope[static_cast<std::size_t>(slot)]);
      const auto& tab = dc.tables[static_cast<std::size_t>(slot)];
      const auto& msg = next.factor_messages[static_cast<std::size_t>(c)][static_cast<std::size_t>(slot)];
      auto& b = next.node_beliefs[static_cast<std::size_t>(vi)];
      for (int x = 0; x < static_cast<int>(b.size()); ++x) {
        double best = kNegInf;
        for (int z = 0; z < zc; ++z)
          best = std::max(best, tab[static_cast<std::int64_t>(x) * zc + z] + msg[static_cast<std::size_t>(z)]);
        b[static_cast<std::size_t>(x)] += best;
      }
    }
  }
  return next;
}

Assignment decode(const BeliefState& s) {
  Assignment a;
  a.states.reserve(s.node_beliefs.size());
  for (const auto& b : s.node_beliefs) {
    int arg = 0;
    for (int x = 1; x < static_cast<int>(b.size()); ++x)
      if (b[static_cast<std::size_t>(x)] > b[static_cast<std::size_t>(arg)]) arg = x;
    a.states.push_back(arg);
  }
  return a;
}

std::pair<BeliefState, Assignment> run_max_product(const FactorGraph& g, int k, BpMode mode,
                                                   bool cavity) {
  if (k < 0) throw std::invalid_argument("iteration count must be >= 0");
  if (mode == BpMode::decomposed) {
    if (cavity) throw std::invalid_argument("cavity form is only available in direct mode");
    const auto d = decompose_graph(g);
    BeliefState s = bp_init_decomposed(g, d);
    for (int it = 0; it < k; ++it) s = bp_iterate_decomposed(g, d, s);
    return {s, decode(s)};
  }
  BeliefState s = bp_init(g);
  for (int it = 0; it < k; ++it) s = bp_iterate(g, s, cavity);
  return {s, decode(s)};
}

}  // namespace fgnn
