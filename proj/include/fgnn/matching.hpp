#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "fgnn/fgnn.hpp"
#include "fgnn/graph.hpp"

namespace fgnn {

// Perfect factor-variable matching: a bijection between variable indices and
// factor indices with i in scope(h(i)) for every variable i.
struct Matching {
  std::vector<int> var_to_factor;
  std::vector<int> factor_to_var;
};

// Maximum bipartite matching via augmenting paths over the (variable, factor)
// incidence; returns the matching iff it is perfect, otherwise nullopt.
std::optional<Matching> find_perfect_matching(const FactorGraph& g);

// An FGNN layer rewritten as pairwise message passing over super-nodes
// [g_h(i), f_i]. Super-node i gathers from N(i) = {j : j in scope(h(i)) or
// i in scope(h(j))}; gating tags mask the pairs the original layer never
// formed, with a positive offset applied before the masked max-aggregation
// and removed afterwards so arbitrary-signed features survive the masking.
class MpnnTransform {
 public:
  MpnnTransform(const FactorGraph& g, Matching h, FgnnLayerParams params);

  // Returns (per-factor rows, per-variable rows); equal to
  // (vf_layer, fv_layer) outputs on the same features.
  std::pair<FeatureMatrix, FeatureMatrix> forward(const FeatureSet& feats) const;

  const Matching& matching() const { return h_; }

 private:
  struct SuperEdge {
    int j = 0;           // neighbor super-node (variable index)
    int vf_edge = -1;    // edge row of (h(i), j) when j in scope(h(i)), else -1
    int fv_edge = -1;    // edge row of (h(j), i) when i in scope(h(j)), else -1
  };

  const FactorGraph* graph_;
  Matching h_;
  FgnnLayerParams params_;
  std::vector<std::vector<SuperEdge>> neighbors_;  // per variable i
};

// Convenience: validates h against g and builds the transform.
MpnnTransform mpnn_transform(const FactorGraph& g, const Matching& h, const FgnnLayerParams& p);

}  // namespace fgnn
