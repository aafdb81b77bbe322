#include "fgnn/oracles.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>

namespace fgnn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Requires ids 0..L-1 in storage order (the chain oracles index by position).
void require_chain_ids(const FactorGraph& g) {
  for (int i = 0; i < g.num_variables(); ++i)
    if (g.variables()[static_cast<std::size_t>(i)].id != i)
      throw StructureError("chain oracle requires variable ids 0..L-1 in order");
}

}  // namespace

MapResult brute_force_map(const FactorGraph& g) {
  const int n = g.num_variables();
  std::int64_t joint = 1;
  for (const auto& v : g.variables()) {
    joint *= v.cardinality;
    if (joint > (std::int64_t{1} << 24)) throw CapacityError("joint state space exceeds 2^24");
  }

  // Per-factor scope as variable positions, for fast per-assignment lookup.
  std::vector<std::vector<int>> scopes;
  scopes.reserve(g.factors().size());
  for (const auto& f : g.factors()) {
    std::vector<int> pos;
    for (int id : f.scope) pos.push_back(g.var_index(id));
    scopes.push_back(std::move(pos));
  }

  Assignment cur{std::vector<int>(static_cast<std::size_t>(n), 0)};
  Assignment best = cur;
  double best_score = kNegInf;
  std::vector<int> idx;
  for (std::int64_t it = 0; it < joint; ++it) {
    double s = 0.0;
    for (std::size_t c = 0; c < scopes.size(); ++c) {
      const auto& f = g.factors()[c];
      idx.clear();
      for (int p : scopes[c]) idx.push_back(cur.states[static_cast<std::size_t>(p)]);
      s += f.log_potential.at(idx);
    }
    for (int i = 0; i < n; ++i)
      s += g.variables()[static_cast<std::size_t>(i)]
               .log_potential[static_cast<std::size_t>(cur.states[static_cast<std::size_t>(i)])];
    // Strict improvement keeps the lexicographically smallest tied argmax,
    // since enumeration is in lexicographic order.
    if (s > best_score) {
      best_score = s;
      best = cur;
    }
    for (int i = n - 1; i >= 0; --i) {
      auto& st = cur.states[static_cast<std::size_t>(i)];
      if (++st < g.variables()[static_cast<std::size_t>(i)].cardinality) break;
      st = 0;
    }
  }
  return {best, best_score};
}

MapResult window_dp_map(const FactorGraph& g, int window) {
  require_chain_ids(g);
  const int n = g.num_variables();
  if (window < 1 || window > n) throw StructureError("window must be in [1, L]");
  for (const auto& v : g.variables())
    if (v.cardinality != 2) throw StructureError("window_dp_map requires binary variables");

  // Group factors by the last variable of their (consecutive, ascending) scope.
  std::vector<std::vector<const FactorNode*>> ending_at(static_cast<std::size_t>(n));
  for (const auto& f : g.factors()) {
    if (f.scope.empty()) throw StructureError("empty factor scope");
    for (std::size_t j = 1; j < f.scope.size(); ++j)
      if (f.scope[j] != f.scope[j - 1] + 1)
        throw StructureError("factor scope is not a consecutive ascending range");
    if (static_cast<int>(f.scope.size()) > window)
      throw StructureError("factor scope wider than window");
    ending_at[static_cast<std::size_t>(f.scope.back())].push_back(&f);
  }

  const int state_bits_cap = window - 1;
  auto state_bits_after = [&](int t) { return std::min(t + 1, state_bits_cap); };

  std::vector<double> dp(1, 0.0);  // before any variable: one empty state
  std::vector<std::vector<std::uint32_t>> parent(static_cast<std::size_t>(n));

  for (int t = 0; t < n; ++t) {
    const int prev_bits = t == 0 ? 0 : state_bits_after(t - 1);
    const int new_bits = state_bits_after(t);
    std::vector<double> next(std::size_t{1} << new_bits, kNegInf);
    auto& par = parent[static_cast<std::size_t>(t)];
    par.assign(std::size_t{1} << new_bits, 0);

    const auto& theta = g.variables()[static_cast<std::size_t>(t)].log_potential;
    for (std::uint32_t s_prev = 0; s_prev < (std::uint32_t{1} << prev_bits); ++s_prev) {
      if (dp[s_prev] == kNegInf) continue;
      for (int x = 0; x < 2; ++x) {
        const std::uint32_t full = (s_prev << 1) | static_cast<std::uint32_t>(x);
        double v = dp[s_prev] + theta[static_cast<std::size_t>(x)];
        for (const FactorNode* f : ending_at[static_cast<std::size_t>(t)]) {
          const int width = static_cast<int>(f->scope.size());
          // Row-major offset equals the low scope-width bits of the window
          // word (earliest scope variable most significant).
          const std::uint32_t off = full & ((std::uint32_t{1} << width) - 1);
          v += f->log_potential[off];
        }
        const std::uint32_t s_new = full & ((std::uint32_t{1} << new_bits) - 1);
        // Ties keep the smaller full window word (oldest variable in the MSB).
        if (v > next[s_new] || (v == next[s_new] && full < par[s_new])) {
          next[s_new] = v;
          par[s_new] = full;
        }
      }
    }
    dp.swap(next);
  }

  std::uint32_t s_best = 0;
  for (std::uint32_t s = 1; s < dp.size(); ++s)
    if (dp[s] > dp[s_best]) s_best = s;

  Assignment a{std::vector<int>(static_cast<std::size_t>(n), 0)};
  std::uint32_t s = s_best;
  for (int t = n - 1; t >= 0; --t) {
    const std::uint32_t full = parent[static_cast<std::size_t>(t)][s];
    a.states[static_cast<std::size_t>(t)] = static_cast<int>(full & 1u);
    s = full >> 1;
  }
  return {a, score(g, a)};
}

MapResult viterbi_chain_map(const FactorGraph& g) {
  require_chain_ids(g);
  const int n = g.num_variables();

  // Transition tables between consecutive variables; several factors on the
  // same pair accumulate.
  std::vector<Tensor> trans;
  trans.reserve(static_cast<std::size_t>(std::max(0, n - 1)));
  for (int t = 1; t < n; ++t)
    trans.emplace_back(std::vector<int>{g.variables()[static_cast<std::size_t>(t - 1)].cardinality,
                                        g.variables()[static_cast<std::size_t>(t)].cardinality});
  for (const auto& f : g.factors()) {
    if (f.scope.size() != 2 || f.scope[1] != f.scope[0] + 1)
      throw StructureError("viterbi_chain_map requires pairwise (i, i+1) factors");
    auto& w = trans[static_cast<std::size_t>(f.scope[0])];
    for (std::int64_t k = 0; k < w.size(); ++k) w[k] += f.log_potential[k];
  }

  std::vector<std::vector<double>> delta(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> from(static_cast<std::size_t>(n));
  delta[0] = g.variables()[0].log_potential;
  for (int t = 1; t < n; ++t) {
    const auto& theta = g.variables()[static_cast<std::size_t>(t)].log_potential;
    const int kp = g.variables()[static_cast<std::size_t>(t - 1)].cardinality;
    const int kt = g.variables()[static_cast<std::size_t>(t)].cardinality;
    const auto& w = trans[static_cast<std::size_t>(t - 1)];
    delta[static_cast<std::size_t>(t)].assign(static_cast<std::size_t>(kt), kNegInf);
    from[static_cast<std::size_t>(t)].assign(static_cast<std::size_t>(kt), 0);
    for (int x = 0; x < kt; ++x) {
      double best = kNegInf;
      int arg = 0;
      for (int p = 0; p < kp; ++p) {
        const double v = delta[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p)] +
                         w[static_cast<std::int64_t>(p) * kt + x];
        if (v > best) {  // strict keeps the smallest tied predecessor
          best = v;
          arg = p;
        }
      }
      delta[static_cast<std::size_t>(t)][static_cast<std::size_t>(x)] = best + theta[static_cast<std::size_t>(x)];
      from[static_cast<std::size_t>(t)][static_cast<std::size_t>(x)] = arg;
    }
  }

  Assignment a{std::vector<int>(static_cast<std::size_t>(n), 0)};
  const auto& last = delta[static_cast<std::size_t>(n - 1)];
  int x = 0;
  for (int s = 1; s < static_cast<int>(last.size()); ++s)
    if (last[static_cast<std::size_t>(s)] > last[static_cast<std::size_t>(x)]) x = s;
  a.states[static_cast<std::size_t>(n - 1)] = x;
  for (int t = n - 1; t > 0; --t) {
    x = from[static_cast<std::size_t>(t)][static_cast<std::size_t>(x)];
    a.states[static_cast<std::size_t>(t - 1)] = x;
  }
  return {a, score(g, a)};
}

}  // namespace fgnn
