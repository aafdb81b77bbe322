#include "fgnn/matching.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <string>

namespace fgnn {

namespace {

struct AugmentingPath {
  const std::vector<std::vector<int>>& adj;  // variable -> candidate factors
  std::vector<int>& var_match;
  std::vector<int>& factor_match;
  std::vector<char> visited;

  bool dfs(int v) {
    for (int c : adj[static_cast<std::size_t>(v)]) {
      if (visited[static_cast<std::size_t>(c)]) continue;
      visited[static_cast<std::size_t>(c)] = 1;
      if (factor_match[static_cast<std::size_t>(c)] < 0 ||
          dfs(factor_match[static_cast<std::size_t>(c)])) {
        var_match[static_cast<std::size_t>(v)] = c;
        factor_match[static_cast<std::size_t>(c)] = v;
        return true;
      }
    }
    return false;
  }
};

}  // namespace

std::optional<Matching> find_perfect_matching(const FactorGraph& g) {
  const int nv = g.num_variables();
  const int nf = g.num_factors();
  if (nv != nf || nv == 0) return std::nullopt;

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(nv));
  for (int c = 0; c < nf; ++c)
    for (int id : g.factors()[static_cast<std::size_t>(c)].scope)
      adj[static_cast<std::size_t>(g.var_index(id))].push_back(c);

  std::vector<int> var_match(static_cast<std::size_t>(nv), -1);
  std::vector<int> factor_match(static_cast<std::size_t>(nf), -1);
  AugmentingPath ap{adj, var_match, factor_match, {}};
  int matched = 0;
  for (int v = 0; v < nv; ++v) {
    ap.visited.assign(static_cast<std::size_t>(nf), 0);
    if (ap.dfs(v)) ++matched;
  }
  if (matched != nv) return std::nullopt;
  return Matching{std::move(var_match), std::move(factor_match)};
}

namespace {

void validate_matching(const FactorGraph& g, const Matching& h) {
  const int nv = g.num_variables();
  const int nf = g.num_factors();
  if (static_cast<int>(h.var_to_factor.size()) != nv ||
      static_cast<int>(h.factor_to_var.size()) != nf || nv != nf)
    throw StructureError("matching does not cover all variables and factors");
  for (int i = 0; i < nv; ++i) {
    const int c = h.var_to_factor[static_cast<std::size_t>(i)];
    if (c < 0 || c >= nf || h.factor_to_var[static_cast<std::size_t>(c)] != i)
      throw StructureError("matching is not an involution at variable " + std::to_string(i));
    const auto& scope = g.factors()[static_cast<std::size_t>(c)].scope;
    bool contains = false;
    for (int id : scope) contains |= g.var_index(id) == i;
    if (!contains)
      throw StructureError("matched factor does not contain variable " + std::to_string(i));
  }
}

}  // namespace

MpnnTransform::MpnnTransform(const FactorGraph& g, Matching h, FgnnLayerParams params)
    : graph_(&g), h_(std::move(h)), params_(std::move(params)) {
  validate_matching(g, h_);

  // Edge row lookup for (factor, variable) pairs.
  std::map<std::pair<int, int>, int> edge_row;
  const auto edges = g.edges();
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) edge_row[edges[static_cast<std::size_t>(e)]] = e;

  const int nv = g.num_variables();
  neighbors_.assign(static_cast<std::size_t>(nv), {});
  for (int i = 0; i < nv; ++i) {
    std::map<int, SuperEdge> by_neighbor;
    const int ci = h_.var_to_factor[static_cast<std::size_t>(i)];
    for (int id : g.factors()[static_cast<std::size_t>(ci)].scope) {
      const int j = g.var_index(id);
      auto& se = by_neighbor.try_emplace(j, SuperEdge{j, -1, -1}).first->second;
      se.vf_edge = edge_row.at({ci, j});
    }
    for (int j = 0; j < nv; ++j) {
      const int cj = h_.var_to_factor[static_cast<std::size_t>(j)];
      auto it = edge_row.find({cj, i});
      if (it == edge_row.end()) continue;
      auto& se = by_neighbor.try_emplace(j, SuperEdge{j, -1, -1}).first->second;
      se.fv_edge = it->second;
    }
    for (auto& [j, se] : by_neighbor) neighbors_[static_cast<std::size_t>(i)].push_back(se);
  }
}

std::pair<FeatureMatrix, FeatureMatrix> MpnnTransform::forward(const FeatureSet& feats) const {
  const FactorGraph& g = *graph_;
  const int nv = g.num_variables();
  FeatureMatrix out_factor(g.num_factors(), params_.vf_rows);
  FeatureMatrix out_node(nv, params_.fv_rows);

  auto product = [&](const DenseNet& m_net, const DenseNet& q_net, int rows, int cols, int c,
                     int i, int e) {
    std::vector<double> input;
    const auto g_row = feats.factor.row(c);
    const auto f_row = feats.node.row(i);
    input.reserve(g_row.size() + f_row.size());
    input.insert(input.end(), g_row.begin(), g_row.end());
    input.insert(input.end(), f_row.begin(), f_row.end());
    const std::vector<double> mv = m_net.forward(input);
    const std::vector<double> qflat = q_net.forward(feats.edge.row(e));
    std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      const double* qr = qflat.data() + static_cast<std::size_t>(r) * cols;
      for (int k = 0; k < cols; ++k) acc += qr[k] * mv[static_cast<std::size_t>(k)];
      out[static_cast<std::size_t>(r)] = acc;
    }
    return out;
  };

  for (int i = 0; i < nv; ++i) {
    const int ci = h_.var_to_factor[static_cast<std::size_t>(i)];

    // Tagged candidates over the super-neighborhood; gated pairs contribute
    // nothing once the positive offset is in place.
    std::vector<std::vector<double>> vf_cands, fv_cands;
    for (const auto& se : neighbors_[static_cast<std::size_t>(i)]) {
      if (se.vf_edge >= 0)
        vf_cands.push_back(product(params_.vf_m, params_.vf_q, params_.vf_rows, params_.vf_cols,
                                   ci, se.j, se.vf_edge));
      const int cj = h_.var_to_factor[static_cast<std::size_t>(se.j)];
      if (se.fv_edge >= 0)
        fv_cands.push_back(product(params_.fv_m, params_.fv_q, params_.fv_rows, params_.fv_cols,
                                   cj, i, se.fv_edge));
    }
    if (vf_cands.empty() || fv_cands.empty())
      throw StructureError("super-node has an empty gated neighborhood");

    double lo = 0.0;
    for (const auto& v : vf_cands) for (double x : v) lo = std::min(lo, x);
    for (const auto& v : fv_cands) for (double x : v) lo = std::min(lo, x);
    const double offset = -lo + 1.0;

    std::vector<double> vf_acc(static_cast<std::size_t>(params_.vf_rows), 0.0);
    for (const auto& v : vf_cands)
      for (std::size_t r = 0; r < vf_acc.size(); ++r) vf_acc[r] = std::max(vf_acc[r], v[r] + offset);
    std::vector<double> fv_acc(static_cast<std::size_t>(params_.fv_rows), 0.0);
    for (const auto& v : fv_cands)
      for (std::size_t r = 0; r < fv_acc.size(); ++r) fv_acc[r] = std::max(fv_acc[r], v[r] + offset);

    for (int r = 0; r < params_.vf_rows; ++r)
      out_factor.at(ci, r) = vf_acc[static_cast<std::size_t>(r)] - offset;
    for (int r = 0; r < params_.fv_rows; ++r)
      out_node.at(i, r) = fv_acc[static_cast<std::size_t>(r)] - offset;
  }
  return {std::move(out_factor), std::move(out_node)};
}

MpnnTransform mpnn_transform(const FactorGraph& g, const Matching& h, const FgnnLayerParams& p) {
  return MpnnTransform(g, h, p);
}

}  // namespace fgnn
