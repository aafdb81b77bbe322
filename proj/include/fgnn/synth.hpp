#pragma once

#include <cstdint>
#include <vector>

#include "fgnn/fgnn.hpp"
#include "fgnn/graph.hpp"

namespace fgnn {

// One benchmark unit: a chain PGM with budget higher-order factors, its
// input features, and an exact MAP label.
struct InstanceMeta {
  int dataset_id = 1;
  std::uint64_t seed = 0;
  int chain_length = 0;
  int window = 0;
  std::vector<int> budget_k;  // per budget factor, window start order
};

struct DatasetInstance {
  FactorGraph graph;
  FeatureSet features;
  Assignment label;
  InstanceMeta meta;
};

// Builds one instance. The chain has L binary variables with unary
// log-potentials drawn U[0,1]; pairwise factors on consecutive pairs
// (dataset 1 uses the fixed table [0, 0.1; 0.2, 1], datasets 2 and 3 set the
// (1,1) entry U[0,2] with zeros elsewhere); one budget factor per full
// window position, allowing at most k ones in its scope, encoded with the
// finite penalty -1e4. Dataset 3 draws k uniformly from {1..window} per
// factor; datasets 1 and 2 use k_budget everywhere.
//
// Draw order from SplitMix64(seed): unary potentials (theta_i(0), theta_i(1)
// ascending i), then pairwise (1,1) values ascending i (datasets 2-3), then
// budget k ascending window start (dataset 3).
//
// Feature schema (binary chains): node rows [theta(0), theta(1)]; factor
// rows [1] for dataset 1, [1, v] for dataset 2, [1, v, onehot(k, window)]
// for dataset 3, where v is the pairwise (1,1) value (0 on budget factors);
// edge rows [is_pairwise, is_budget, onehot(slot, window)].
//
// The label comes from window_dp_map and is exact.
DatasetInstance gen_instance(int dataset_id, std::uint64_t seed, int length, int window,
                             int k_budget);

struct DatasetSplits {
  std::vector<DatasetInstance> train;
  std::vector<DatasetInstance> val;
  std::vector<DatasetInstance> test;
};

// Per-instance seeds are seed * 10^6 + index with a single index sequence
// running train, then val, then test, so the split streams are disjoint.
DatasetSplits gen_dataset(int dataset_id, std::uint64_t seed, int n_train, int n_val, int n_test,
                          int length, int window, int k_budget);

}  // namespace fgnn
