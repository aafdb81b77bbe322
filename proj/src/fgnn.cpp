#include "fgnn/fgnn.hpp"

#include <algorithm>
#include <string>

namespace fgnn {

namespace {

void check_feats(const FactorGraph& g, const FeatureSet& feats) {
  if (feats.node.rows != g.num_variables()) throw ShapeError("node feature rows != variable count");
  if (feats.factor.rows != g.num_factors()) throw ShapeError("factor feature rows != factor count");
  const auto edges = g.edges();
  if (feats.edge.rows != static_cast<int>(edges.size()))
    throw ShapeError("edge feature rows != edge count");
}

void check_half(const DenseNet& m, const DenseNet& q, int q_rows, int q_cols, const FeatureSet& feats) {
  if (m.input_dim() >= 0 && m.input_dim() != feats.factor.cols + feats.node.cols)
    throw ShapeError("M net input dim does not match [g_c, f_i] width");
  if (q.input_dim() >= 0 && q.input_dim() != feats.edge.cols)
    throw ShapeError("Q net input dim does not match edge feature width");
  const int m_out = m.output_dim() >= 0 ? m.output_dim() : feats.factor.cols + feats.node.cols;
  if (m_out != q_cols) throw ShapeError("Q matrix cols do not match M output length");
  if (q.output_dim() >= 0 && q.output_dim() != q_rows * q_cols)
    throw ShapeError("Q net output length does not match rows*cols");
}

// Q(t) reshaped row-major, times M([g, f]).
std::vector<double> edge_product(const DenseNet& m_net, const DenseNet& q_net, int rows, int cols,
                                 std::span<const double> g_row, std::span<const double> f_row,
                                 std::span<const double> t_row) {
  std::vector<double> input;
  input.reserve(g_row.size() + f_row.size());
  input.insert(input.end(), g_row.begin(), g_row.end());
  input.insert(input.end(), f_row.begin(), f_row.end());
  const std::vector<double> mv = m_net.forward(input);
  const std::vector<double> qflat = q_net.forward(t_row);
  std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* qr = qflat.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += qr[c] * mv[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

}  // namespace

std::vector<double> aggregate_max(const std::vector<std::vector<double>>& items) {
  if (items.empty()) throw StructureError("aggregation over an empty neighborhood");
  std::vector<double> out = items.front();
  for (std::size_t k = 1; k < items.size(); ++k) {
    if (items[k].size() != out.size()) throw ShapeError("aggregated vectors differ in length");
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::max(out[j], items[k][j]);
  }
  return out;
}

FeatureMatrix vf_layer(const FactorGraph& g, const FeatureSet& feats, const FgnnLayerParams& p) {
  check_feats(g, feats);
  check_half(p.vf_m, p.vf_q, p.vf_rows, p.vf_cols, feats);
  FeatureMatrix out(g.num_factors(), p.vf_rows);
  const auto edges = g.edges();
  std::vector<std::vector<std::vector<double>>> per_factor(static_cast<std::size_t>(g.num_factors()));
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    const auto [c, i] = edges[static_cast<std::size_t>(e)];
    per_factor[static_cast<std::size_t>(c)].push_back(
        edge_product(p.vf_m, p.vf_q, p.vf_rows, p.vf_cols, feats.factor.row(c), feats.node.row(i),
                     feats.edge.row(e)));
  }
  for (int c = 0; c < g.num_factors(); ++c) {
    if (per_factor[static_cast<std::size_t>(c)].empty())
      throw StructureError("factor " + std::to_string(c) + " has no incident variables");
    const auto agg = aggregate_max(per_factor[static_cast<std::size_t>(c)]);
    std::copy(agg.begin(), agg.end(), out.row(c).begin());
  }
  return out;
}

FeatureMatrix fv_layer(const FactorGraph& g, const FeatureSet& feats, const FgnnLayerParams& p) {
  check_feats(g, feats);
  check_half(p.fv_m, p.fv_q, p.fv_rows, p.fv_cols, feats);
  FeatureMatrix out(g.num_variables(), p.fv_rows);
  const auto edges = g.edges();
  std::vector<std::vector<std::vector<double>>> per_var(static_cast<std::size_t>(g.num_variables()));
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    const auto [c, i] = edges[static_cast<std::size_t>(e)];
    per_var[static_cast<std::size_t>(i)].push_back(
        edge_product(p.fv_m, p.fv_q, p.fv_rows, p.fv_cols, feats.factor.row(c), feats.node.row(i),
                     feats.edge.row(e)));
  }
  for (int i = 0; i < g.num_variables(); ++i) {
    if (per_var[static_cast<std::size_t>(i)].empty())
      throw StructureError("variable " + std::to_string(i) + " has no incident factors");
    const auto agg = aggregate_max(per_var[static_cast<std::size_t>(i)]);
    std::copy(agg.begin(), agg.end(), out.row(i).begin());
  }
  return out;
}

namespace {

FeatureMatrix apply_per_row(const DenseNet& net, const FeatureMatrix& in) {
  if (net.input_dim() >= 0 && net.input_dim() != in.cols)
    throw ShapeError("dense layer input dim does not match feature width");
  const int out_cols = net.output_dim() >= 0 ? net.output_dim() : in.cols;
  FeatureMatrix out(in.rows, out_cols);
  for (int r = 0; r < in.rows; ++r) {
    const auto y = net.forward(in.row(r));
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

FeatureMatrix apply_affine_rows(const AffineLayer& map, const FeatureMatrix& in) {
  FeatureMatrix out(in.rows, map.out_dim);
  std::vector<double> y;
  for (int r = 0; r < in.rows; ++r) {
    affine_forward(map, in.row(r), y);
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

void add_rows(FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw ShapeError("residual add requires matching feature shapes");
  for (std::size_t j = 0; j < a.data.size(); ++j) a.data[j] += b.data[j];
}

FeatureSet apply_entries(const std::vector<StackEntry>& entries, const FactorGraph& g,
                         FeatureSet feats) {
  for (const auto& entry : entries) {
    if (const auto* layer = std::get_if<FgnnLayerEntry>(&entry.op)) {
      FeatureMatrix new_factor = vf_layer(g, feats, layer->params);
      FeatureSet mid = feats;
      mid.factor = std::move(new_factor);
      FeatureMatrix new_node = fv_layer(g, mid, layer->params);
      feats.factor = std::move(mid.factor);
      feats.node = std::move(new_node);
    } else if (const auto* dense = std::get_if<DensePairEntry>(&entry.op)) {
      feats.node = apply_per_row(dense->net, feats.node);
      feats.factor = apply_per_row(dense->net, feats.factor);
    } else {
      const auto& res = std::get<ResidualEntry>(entry.op);
      FeatureSet inner = apply_entries(res.inner, g, feats);
      FeatureMatrix skip_node =
          res.node_proj ? apply_affine_rows(*res.node_proj, feats.node) : feats.node;
      FeatureMatrix skip_factor =
          res.factor_proj ? apply_affine_rows(*res.factor_proj, feats.factor) : feats.factor;
      add_rows(inner.node, skip_node);
      add_rows(inner.factor, skip_factor);
      feats = std::move(inner);
    }
  }
  return feats;
}

}  // namespace

FeatureSet stack_forward(const FgnnStack& s, const FactorGraph& g, const FeatureSet& feats) {
  FeatureSet out = apply_entries(s.entries, g, feats);
  if (s.readout) out.node = apply_affine_rows(*s.readout, out.node);
  return out;
}

}  // namespace fgnn
