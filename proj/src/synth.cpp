#include "fgnn/synth.hpp"

#include <string>

#include "fgnn/oracles.hpp"
#include "fgnn/rng.hpp"

namespace fgnn {

namespace {

int popcount32(std::uint32_t x) {
  int n = 0;
  for (; x; x &= x - 1) ++n;
  return n;
}

}  // namespace

DatasetInstance gen_instance(int dataset_id, std::uint64_t seed, int length, int window,
                             int k_budget) {
  if (dataset_id < 1 || dataset_id > 3) throw std::invalid_argument("dataset_id must be 1, 2 or 3");
  if (window < 2 || length < window) throw std::invalid_argument("need L >= window >= 2");
  if (dataset_id != 3 && (k_budget < 1 || k_budget > window))
    throw std::invalid_argument("k_budget must be in [1, window]");

  SplitMix64 rng(seed);

  std::vector<VariableNode> vars;
  vars.reserve(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i)
    vars.push_back({i, 2, {rng.next_unit(), rng.next_unit()}});

  const int n_pairwise = length - 1;
  const int n_budget = length - window + 1;

  std::vector<double> pair_value(static_cast<std::size_t>(n_pairwise), 0.0);
  if (dataset_id >= 2)
    for (int i = 0; i < n_pairwise; ++i) pair_value[static_cast<std::size_t>(i)] = rng.next_uniform(0.0, 2.0);

  std::vector<int> budget_k(static_cast<std::size_t>(n_budget), k_budget);
  if (dataset_id == 3)
    for (int s = 0; s < n_budget; ++s)
      budget_k[static_cast<std::size_t>(s)] = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(window)));

  std::vector<FactorNode> factors;
  factors.reserve(static_cast<std::size_t>(n_pairwise + n_budget));
  for (int i = 0; i < n_pairwise; ++i) {
    std::vector<double> table = dataset_id == 1
                                    ? std::vector<double>{0.0, 0.1, 0.2, 1.0}
                                    : std::vector<double>{0.0, 0.0, 0.0, pair_value[static_cast<std::size_t>(i)]};
    factors.push_back({i, {i, i + 1}, Tensor({2, 2}, std::move(table))});
  }
  for (int s = 0; s < n_budget; ++s) {
    std::vector<int> scope(static_cast<std::size_t>(window));
    for (int j = 0; j < window; ++j) scope[static_cast<std::size_t>(j)] = s + j;
    std::vector<double> table(std::size_t{1} << window, 0.0);
    for (std::uint32_t conf = 0; conf < table.size(); ++conf)
      if (popcount32(conf) > budget_k[static_cast<std::size_t>(s)]) table[conf] = kHardPenalty;
    factors.push_back({n_pairwise + s, std::move(scope),
                       Tensor(std::vector<int>(static_cast<std::size_t>(window), 2), std::move(table))});
  }

  DatasetInstance inst;
  inst.graph = FactorGraph(std::move(vars), std::move(factors));
  inst.label = window_dp_map(inst.graph, window).assignment;
  inst.meta = {dataset_id, seed, length, window, budget_k};

  // Generated labels must satisfy every hard budget; anything else is a bug
  // in the oracle.
  for (int s = 0; s < n_budget; ++s) {
    int ones = 0;
    for (int j = 0; j < window; ++j) ones += inst.label.states[static_cast<std::size_t>(s + j)];
    if (ones > budget_k[static_cast<std::size_t>(s)])
      throw StructureError("generated label violates a budget constraint");
  }

  const int factor_cols = dataset_id == 1 ? 1 : (dataset_id == 2 ? 2 : 2 + window);
  FeatureSet& f = inst.features;
  f.node = FeatureMatrix(length, 2);
  for (int i = 0; i < length; ++i) {
    f.node.at(i, 0) = inst.graph.variables()[static_cast<std::size_t>(i)].log_potential[0];
    f.node.at(i, 1) = inst.graph.variables()[static_cast<std::size_t>(i)].log_potential[1];
  }
  f.factor = FeatureMatrix(n_pairwise + n_budget, factor_cols);
  for (int c = 0; c < n_pairwise + n_budget; ++c) {
    f.factor.at(c, 0) = 1.0;
    if (dataset_id >= 2 && c < n_pairwise) f.factor.at(c, 1) = pair_value[static_cast<std::size_t>(c)];
    if (dataset_id == 3 && c >= n_pairwise)
      f.factor.at(c, 2 + budget_k[static_cast<std::size_t>(c - n_pairwise)] - 1) = 1.0;
  }
  const auto edges = inst.graph.edges();
  f.edge = FeatureMatrix(static_cast<int>(edges.size()), 2 + window);
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    const auto [c, i] = edges[static_cast<std::size_t>(e)];
    const bool pairwise = c < n_pairwise;
    f.edge.at(e, pairwise ? 0 : 1) = 1.0;
    const auto& scope = inst.graph.factors()[static_cast<std::size_t>(c)].scope;
    int slot = 0;
    while (scope[static_cast<std::size_t>(slot)] != i) ++slot;
    f.edge.at(e, 2 + slot) = 1.0;
  }
  return inst;
}

DatasetSplits gen_dataset(int dataset_id, std::uint64_t seed, int n_train, int n_val, int n_test,
                          int length, int window, int k_budget) {
  if (n_train < 0 || n_val < 0 || n_test < 0) throw std::invalid_argument("split sizes must be >= 0");
  DatasetSplits out;
  std::uint64_t index = 0;
  auto emit = [&](std::vector<DatasetInstance>& dst, int count) {
    dst.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i, ++index)
      dst.push_back(gen_instance(dataset_id, seed * 1000000ull + index, length, window, k_budget));
  };
  emit(out.train, n_train);
  emit(out.val, n_val);
  emit(out.test, n_test);
  return out;
}

}  // namespace fgnn
