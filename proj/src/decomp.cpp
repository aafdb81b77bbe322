#include "fgnn/decomp.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fgnn {

namespace {

DecomposedFactor build_tables(const FactorNode& f, double delta) {
  const Tensor& theta = f.log_potential;
  const std::vector<int>& cards = theta.shape();
  const int arity = static_cast<int>(cards.size());
  const auto z_count = theta.size();

  DecomposedFactor d;
  d.factor_id = f.id;
  d.scope_cardinalities = cards;
  d.z_cardinality = static_cast<int>(z_count);
  d.offset = delta;

  double max_abs = 0.0;
  for (double v : theta.values()) max_abs = std::max(max_abs, std::fabs(v + delta));
  d.penalty = arity * max_abs + 1.0;

  const double fold = delta / arity;
  d.tables.reserve(static_cast<std::size_t>(arity));
  for (int s = 0; s < arity; ++s)
    d.tables.emplace_back(std::vector<int>{cards[static_cast<std::size_t>(s)], d.z_cardinality});

  // Stride of scope slot s in the row-major configuration index.
  std::vector<std::int64_t> stride(static_cast<std::size_t>(arity), 1);
  for (int s = arity - 2; s >= 0; --s)
    stride[static_cast<std::size_t>(s)] =
        stride[static_cast<std::size_t>(s + 1)] * cards[static_cast<std::size_t>(s + 1)];

  for (int s = 0; s < arity; ++s) {
    Tensor& tab = d.tables[static_cast<std::size_t>(s)];
    const int k = cards[static_cast<std::size_t>(s)];
    for (int x = 0; x < k; ++x)
      for (std::int64_t z = 0; z < z_count; ++z) {
        const int xz = static_cast<int>((z / stride[static_cast<std::size_t>(s)]) % k);
        const double v = xz == x ? (theta[z] + delta) / arity - fold : -d.penalty - fold;
        tab[static_cast<std::int64_t>(x) * z_count + z] = v;
      }
  }
  return d;
}

}  // namespace

DecomposedFactor decompose_factor(const FactorNode& f) {
  if (f.scope.empty()) throw StructureError("cannot decompose a factor with empty scope");
  if (f.log_potential.min() < 1.0)
    throw std::domain_error("decompose_factor requires log-potentials >= 1; shift the graph first");
  return build_tables(f, 0.0);
}

DecomposedFactor decompose_factor_any(const FactorNode& f) {
  if (f.scope.empty()) throw StructureError("cannot decompose a factor with empty scope");
  const double lo = f.log_potential.min();
  const double delta = lo < 1.0 ? 1.0 - lo : 0.0;
  return build_tables(f, delta);
}

std::vector<DecomposedFactor> decompose_graph(const FactorGraph& g) {
  std::vector<DecomposedFactor> out;
  out.reserve(g.factors().size());
  for (const auto& f : g.factors()) out.push_back(decompose_factor_any(f));
  return out;
}

Tensor reconstruct(const DecomposedFactor& d) {
  const auto& cards = d.scope_cardinalities;
  const int arity = static_cast<int>(cards.size());
  Tensor out(cards);
  const std::int64_t n_conf = out.size();
  std::vector<int> idx(static_cast<std::size_t>(arity), 0);
  for (std::int64_t c = 0; c < n_conf; ++c) {
    double best = -std::numeric_limits<double>::infinity();
    for (int z = 0; z < d.z_cardinality; ++z) {
      double sum = 0.0;
      for (int s = 0; s < arity; ++s)
        sum += d.tables[static_cast<std::size_t>(s)]
                       [static_cast<std::int64_t>(idx[static_cast<std::size_t>(s)]) * d.z_cardinality + z];
      best = std::max(best, sum);
    }
    out[c] = best;
    for (int s = arity - 1; s >= 0; --s) {
      if (++idx[static_cast<std::size_t>(s)] < cards[static_cast<std::size_t>(s)]) break;
      idx[static_cast<std::size_t>(s)] = 0;
    }
  }
  return out;
}

}  // namespace fgnn
