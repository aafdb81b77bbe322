#pragma once

#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "fgnn/densenet.hpp"
#include "fgnn/graph.hpp"

namespace fgnn {

// Row-major matrix of feature rows (one row per node, factor, or edge).
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
  std::span<double> row(int r) {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
};

// Node, factor, and edge features. Edge rows follow FactorGraph::edges()
// order (factor-major, scope order). Dimensions are uniform per family.
struct FeatureSet {
  FeatureMatrix node;
  FeatureMatrix factor;
  FeatureMatrix edge;
};

// Parameters of one FGNN layer: the Variable-to-Factor and Factor-to-Variable
// halves each carry an M net (applied to [g_c, f_i]) and a Q net whose output
// is a row-major (rows x cols) matrix applied to M's output.
struct FgnnLayerParams {
  DenseNet vf_m, vf_q;
  int vf_rows = 0, vf_cols = 0;
  DenseNet fv_m, fv_q;
  int fv_rows = 0, fv_cols = 0;
};

// g~_c = max over incident variables i of Q(t_ci) * M([g_c, f_i]).
// Per-factor rows; throws StructureError on a factor with no neighbors.
FeatureMatrix vf_layer(const FactorGraph& g, const FeatureSet& feats, const FgnnLayerParams& p);

// f~_i = max over incident factors c of Q(t_ci) * M([g_c, f_i]).
// Per-variable rows; throws StructureError on an isolated variable.
FeatureMatrix fv_layer(const FactorGraph& g, const FeatureSet& feats, const FgnnLayerParams& p);

// Elementwise max over a nonempty set of equal-length vectors.
std::vector<double> aggregate_max(const std::vector<std::vector<double>>& items);

struct StackEntry;

// One FGNN layer: VF followed by FV, replacing factor and node features.
struct FgnnLayerEntry {
  FgnnLayerParams params;
};

// Per-element dense layer applied to both feature families (which therefore
// must share their input width).
struct DensePairEntry {
  DenseNet net;
};

// Residual block: output = inner(input) + projection(input), elementwise per
// family. Projections default to identity and are only set when dims differ.
struct ResidualEntry {
  std::vector<StackEntry> inner;
  std::optional<AffineLayer> node_proj;
  std::optional<AffineLayer> factor_proj;
};

struct StackEntry {
  std::variant<FgnnLayerEntry, DensePairEntry, ResidualEntry> op;
};

// Layered network over a factor graph, with an optional final linear readout
// applied per-node.
struct FgnnStack {
  std::vector<StackEntry> entries;
  std::optional<AffineLayer> readout;
};

// Applies the stack entries in order; returns the transformed features. When
// a readout is present it replaces the node features in the result.
FeatureSet stack_forward(const FgnnStack& s, const FactorGraph& g, const FeatureSet& feats);

}  // namespace fgnn
