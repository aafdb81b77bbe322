#include "fgnn/learn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <thread>
#include <unordered_map>

#include "fgnn/rng.hpp"

namespace fgnn {

// ---------------------------------------------------------------------------
// Parameter traversal

namespace {

template <typename Entries, typename Fn>
void walk_units(Entries& entries, Fn&& fn) {
  for (auto& e : entries) {
    if (auto* l = std::get_if<FgnnLayerEntry>(&e.op)) {
      fn(l->params.vf_m);
      fn(l->params.vf_q);
      fn(l->params.fv_m);
      fn(l->params.fv_q);
    } else if (auto* d = std::get_if<DensePairEntry>(&e.op)) {
      fn(d->net);
    } else {
      auto& r = std::get<ResidualEntry>(e.op);
      walk_units(r.inner, fn);
      if (r.node_proj) fn(*r.node_proj);
      if (r.factor_proj) fn(*r.factor_proj);
    }
  }
}

// Visits every affine layer in canonical order (readout last).
template <typename StackT, typename Fn>
void walk_affine(StackT& s, Fn&& fn) {
  walk_units(s.entries, [&](auto& unit) {
    using U = std::remove_cv_t<std::remove_reference_t<decltype(unit)>>;
    if constexpr (std::is_same_v<U, DenseNet>) {
      for (auto& layer : unit.layers()) fn(layer);
    } else {
      fn(unit);
    }
  });
  if (s.readout) fn(*s.readout);
}

std::size_t affine_param_count(const AffineLayer& l) { return l.weights.size() + l.bias.size(); }

std::size_t net_param_count(const DenseNet& n) {
  std::size_t c = 0;
  for (const auto& l : n.layers()) c += affine_param_count(l);
  return c;
}

// Flat-offset lookup for every net / standalone affine unit, keyed by address.
std::unordered_map<const void*, std::size_t> unit_offsets(const FgnnStack& s) {
  std::unordered_map<const void*, std::size_t> off;
  std::size_t cursor = 0;
  walk_units(s.entries, [&](const auto& unit) {
    using U = std::remove_cv_t<std::remove_reference_t<decltype(unit)>>;
    off[&unit] = cursor;
    if constexpr (std::is_same_v<U, DenseNet>)
      cursor += net_param_count(unit);
    else
      cursor += affine_param_count(unit);
  });
  if (s.readout) off[&*s.readout] = cursor;
  return off;
}

}  // namespace

std::size_t stack_param_count(const FgnnStack& s) {
  std::size_t c = 0;
  walk_affine(s, [&](const AffineLayer& l) { c += affine_param_count(l); });
  return c;
}

std::vector<double> get_params(const FgnnStack& s) {
  std::vector<double> flat;
  flat.reserve(stack_param_count(s));
  walk_affine(s, [&](const AffineLayer& l) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  });
  return flat;
}

void set_params(FgnnStack& s, const std::vector<double>& flat) {
  std::size_t at = 0;
  walk_affine(s, [&](AffineLayer& l) {
    if (at + affine_param_count(l) > flat.size()) throw ShapeError("flat parameter vector too short");
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at),
              flat.begin() + static_cast<std::ptrdiff_t>(at + l.weights.size()), l.weights.begin());
    at += l.weights.size();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at),
              flat.begin() + static_cast<std::ptrdiff_t>(at + l.bias.size()), l.bias.begin());
    at += l.bias.size();
  });
  if (at != flat.size()) throw ShapeError("flat parameter vector length mismatch");
}

void init_params(FgnnStack& s, std::uint64_t seed) {
  SplitMix64 rng(seed);
  walk_affine(s, [&](AffineLayer& l) {
    const double a = std::sqrt(6.0 / (l.in_dim + l.out_dim));
    for (double& w : l.weights) w = rng.next_uniform(-a, a);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  });
}

// ---------------------------------------------------------------------------
// Loss and metrics

double loss_map_xent(const std::vector<std::vector<double>>& node_logits, const Assignment& label) {
  if (node_logits.size() != label.states.size())
    throw std::invalid_argument("logit rows do not match label length");
  if (node_logits.empty()) throw std::invalid_argument("empty logits");
  double total = 0.0;
  for (std::size_t i = 0; i < node_logits.size(); ++i) {
    const auto& l = node_logits[i];
    const int y = label.states[i];
    if (y < 0 || y >= static_cast<int>(l.size())) throw std::out_of_range("label state out of range");
    const double mx = *std::max_element(l.begin(), l.end());
    double z = 0.0;
    for (double v : l) z += std::exp(v - mx);
    total += std::log(z) + mx - l[static_cast<std::size_t>(y)];
  }
  return total / static_cast<double>(node_logits.size());
}

double agreement(const Assignment& pred, const Assignment& label) {
  if (pred.states.size() != label.states.size())
    throw std::invalid_argument("assignment lengths differ");
  if (pred.states.empty()) throw std::invalid_argument("empty assignments");
  int hits = 0;
  for (std::size_t i = 0; i < pred.states.size(); ++i) hits += pred.states[i] == label.states[i];
  return static_cast<double>(hits) / static_cast<double>(pred.states.size());
}

// ---------------------------------------------------------------------------
// Traced forward

namespace {

struct NetTrace {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> preacts;
  std::vector<double> output;
};

void net_forward_trace(const DenseNet& net, std::span<const double> x, NetTrace& tr) {
  tr.inputs.clear();
  tr.preacts.clear();
  std::vector<double> cur(x.begin(), x.end());
  for (const auto& layer : net.layers()) {
    if (static_cast<int>(cur.size()) != layer.in_dim) throw ShapeError("net input width mismatch");
    std::vector<double> pre(static_cast<std::size_t>(layer.out_dim), 0.0);
    for (int r = 0; r < layer.out_dim; ++r) {
      double acc = layer.bias[static_cast<std::size_t>(r)];
      const double* row = layer.weights.data() + static_cast<std::size_t>(r) * layer.in_dim;
      for (int c = 0; c < layer.in_dim; ++c) acc += row[c] * cur[static_cast<std::size_t>(c)];
      pre[static_cast<std::size_t>(r)] = acc;
    }
    tr.inputs.push_back(std::move(cur));
    cur = pre;
    if (layer.act == Activation::relu)
      for (double& v : cur) v = v > 0.0 ? v : 0.0;
    tr.preacts.push_back(std::move(pre));
  }
  tr.output = cur;
}

// Accumulates parameter grads at gbase (layer-major, weights then bias) and
// returns the input gradient in dx.
void net_backward(const DenseNet& net, const NetTrace& tr, std::span<const double> dout,
                  double* gbase, std::vector<double>& dx) {
  std::vector<double> d(dout.begin(), dout.end());
  std::vector<std::size_t> off(net.layers().size(), 0);
  std::size_t cursor = 0;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    off[l] = cursor;
    cursor += affine_param_count(net.layers()[l]);
  }
  for (std::size_t l = net.layers().size(); l-- > 0;) {
    const auto& layer = net.layers()[l];
    const auto& pre = tr.preacts[l];
    const auto& in = tr.inputs[l];
    if (layer.act == Activation::relu)
      for (int r = 0; r < layer.out_dim; ++r)
        if (pre[static_cast<std::size_t>(r)] <= 0.0) d[static_cast<std::size_t>(r)] = 0.0;
    double* gw = gbase + off[l];
    double* gb = gw + layer.weights.size();
    std::vector<double> dprev(static_cast<std::size_t>(layer.in_dim), 0.0);
    for (int r = 0; r < layer.out_dim; ++r) {
      const double dr = d[static_cast<std::size_t>(r)];
      if (dr == 0.0) continue;
      gb[r] += dr;
      const double* row = layer.weights.data() + static_cast<std::size_t>(r) * layer.in_dim;
      double* gwr = gw + static_cast<std::size_t>(r) * layer.in_dim;
      for (int c = 0; c < layer.in_dim; ++c) {
        gwr[c] += dr * in[static_cast<std::size_t>(c)];
        dprev[static_cast<std::size_t>(c)] += dr * row[c];
      }
    }
    d = std::move(dprev);
  }
  dx = std::move(d);
}

struct HalfTrace {
  int g_cols = 0, f_cols = 0;  // M input split
  std::vector<NetTrace> m_tr;              // per edge
  std::vector<std::vector<double>> prod;   // per edge, length rows
  std::vector<int> qgroup;                 // per edge
  std::vector<NetTrace> q_tr;              // per distinct edge-feature group
  std::vector<std::vector<int>> argmax;    // per target row -> winning edge
};

// Traced vf/fv half. Edges with identical feature rows share one Q
// evaluation; the subgradient of the max-aggregation goes to the first
// (lowest-index) maximizing edge.
FeatureMatrix half_forward_trace(const FactorGraph& g, const FeatureSet& feats,
                                 const DenseNet& m_net, const DenseNet& q_net, int rows, int cols,
                                 bool to_factor, HalfTrace& tr) {
  const auto edges = g.edges();
  const int n_targets = to_factor ? g.num_factors() : g.num_variables();
  tr.g_cols = feats.factor.cols;
  tr.f_cols = feats.node.cols;
  tr.m_tr.assign(edges.size(), {});
  tr.prod.assign(edges.size(), {});
  tr.qgroup.assign(edges.size(), -1);
  tr.q_tr.clear();

  std::map<std::vector<double>, int> groups;
  std::vector<double> m_in;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [c, i] = edges[e];
    std::vector<double> key(feats.edge.row(static_cast<int>(e)).begin(),
                            feats.edge.row(static_cast<int>(e)).end());
    auto [it, fresh] = groups.try_emplace(std::move(key), static_cast<int>(tr.q_tr.size()));
    if (fresh) {
      tr.q_tr.emplace_back();
      net_forward_trace(q_net, feats.edge.row(static_cast<int>(e)), tr.q_tr.back());
      if (static_cast<int>(tr.q_tr.back().output.size()) != rows * cols)
        throw ShapeError("Q net output length does not match rows*cols");
    }
    tr.qgroup[e] = it->second;

    const auto g_row = feats.factor.row(c);
    const auto f_row = feats.node.row(i);
    m_in.assign(g_row.begin(), g_row.end());
    m_in.insert(m_in.end(), f_row.begin(), f_row.end());
    net_forward_trace(m_net, m_in, tr.m_tr[e]);
    const auto& mv = tr.m_tr[e].output;
    if (static_cast<int>(mv.size()) != cols) throw ShapeError("M net output length mismatch");

    const auto& qflat = tr.q_tr[static_cast<std::size_t>(tr.qgroup[e])].output;
    auto& p = tr.prod[e];
    p.assign(static_cast<std::size_t>(rows), 0.0);
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      const double* qr = qflat.data() + static_cast<std::size_t>(r) * cols;
      for (int c2 = 0; c2 < cols; ++c2) acc += qr[c2] * mv[static_cast<std::size_t>(c2)];
      p[static_cast<std::size_t>(r)] = acc;
    }
  }

  FeatureMatrix out(n_targets, rows);
  tr.argmax.assign(static_cast<std::size_t>(n_targets), {});
  std::vector<char> seen(static_cast<std::size_t>(n_targets), 0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const int t = to_factor ? edges[e].first : edges[e].second;
    auto& arg = tr.argmax[static_cast<std::size_t>(t)];
    if (!seen[static_cast<std::size_t>(t)]) {
      seen[static_cast<std::size_t>(t)] = 1;
      arg.assign(static_cast<std::size_t>(rows), static_cast<int>(e));
      std::copy(tr.prod[e].begin(), tr.prod[e].end(), out.row(t).begin());
    } else {
      for (int r = 0; r < rows; ++r)
        if (tr.prod[e][static_cast<std::size_t>(r)] > out.at(t, r)) {
          out.at(t, r) = tr.prod[e][static_cast<std::size_t>(r)];
          arg[static_cast<std::size_t>(r)] = static_cast<int>(e);
        }
    }
  }
  for (int t = 0; t < n_targets; ++t)
    if (!seen[static_cast<std::size_t>(t)])
      throw StructureError(to_factor ? "factor with no incident variables"
                                     : "variable with no incident factors");
  return out;
}

void half_backward(const FactorGraph& g, const DenseNet& m_net, const DenseNet& q_net, int rows,
                   int cols, bool to_factor, const HalfTrace& tr, const FeatureMatrix& dout,
                   double* g_m, double* g_q, FeatureMatrix& dg, FeatureMatrix& df) {
  const auto edges = g.edges();
  std::vector<std::vector<double>> dprod(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) dprod[e].assign(static_cast<std::size_t>(rows), 0.0);
  for (int t = 0; t < dout.rows; ++t)
    for (int r = 0; r < rows; ++r) {
      const double dv = dout.at(t, r);
      if (dv != 0.0) dprod[static_cast<std::size_t>(tr.argmax[static_cast<std::size_t>(t)][static_cast<std::size_t>(r)])]
                          [static_cast<std::size_t>(r)] += dv;
    }

  std::vector<std::vector<double>> dqflat(tr.q_tr.size());
  for (auto& v : dqflat) v.assign(static_cast<std::size_t>(rows) * cols, 0.0);

  std::vector<double> dm_out(static_cast<std::size_t>(cols));
  std::vector<double> dm_in;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    bool any = false;
    for (double v : dprod[e]) any |= v != 0.0;
    if (!any) continue;
    const auto& qflat = tr.q_tr[static_cast<std::size_t>(tr.qgroup[e])].output;
    const auto& mv = tr.m_tr[e].output;
    std::fill(dm_out.begin(), dm_out.end(), 0.0);
    auto& dq = dqflat[static_cast<std::size_t>(tr.qgroup[e])];
    for (int r = 0; r < rows; ++r) {
      const double dr = dprod[e][static_cast<std::size_t>(r)];
      if (dr == 0.0) continue;
      const double* qr = qflat.data() + static_cast<std::size_t>(r) * cols;
      double* dqr = dq.data() + static_cast<std::size_t>(r) * cols;
      for (int c2 = 0; c2 < cols; ++c2) {
        dqr[c2] += dr * mv[static_cast<std::size_t>(c2)];
        dm_out[static_cast<std::size_t>(c2)] += dr * qr[c2];
      }
    }
    net_backward(m_net, tr.m_tr[e], dm_out, g_m, dm_in);
    const auto [c, i] = edges[e];
    for (int k = 0; k < tr.g_cols; ++k) dg.at(c, k) += dm_in[static_cast<std::size_t>(k)];
    for (int k = 0; k < tr.f_cols; ++k) df.at(i, k) += dm_in[static_cast<std::size_t>(tr.g_cols + k)];
  }

  std::vector<double> dt_unused;
  for (std::size_t grp = 0; grp < tr.q_tr.size(); ++grp) {
    bool any = false;
    for (double v : dqflat[grp]) any |= v != 0.0;
    if (any) net_backward(q_net, tr.q_tr[grp], dqflat[grp], g_q, dt_unused);
  }
}

struct FgnnLayerTrace {
  HalfTrace vf, fv;
};

struct DensePairTrace {
  std::vector<NetTrace> node_tr, factor_tr;
};

struct EntryTrace;

struct ResidualTrace {
  std::vector<EntryTrace> inner;
  FeatureSet input;
};

struct EntryTrace {
  std::variant<FgnnLayerTrace, DensePairTrace, ResidualTrace> t;
};

}  // namespace

struct StackTape {
  FeatureSet input;
  std::vector<EntryTrace> entries;
  FeatureMatrix pre_readout_node;
  FeatureMatrix readout_pre;
  FeatureSet output;
  bool consumed = false;
};

namespace {

FeatureSet trace_entries(const std::vector<StackEntry>& entries, const FactorGraph& g,
                         FeatureSet feats, std::vector<EntryTrace>& traces) {
  traces.clear();
  traces.reserve(entries.size());
  for (const auto& entry : entries) {
    if (const auto* layer = std::get_if<FgnnLayerEntry>(&entry.op)) {
      FgnnLayerTrace lt;
      const auto& p = layer->params;
      FeatureMatrix g_new = half_forward_trace(g, feats, p.vf_m, p.vf_q, p.vf_rows, p.vf_cols,
                                               /*to_factor=*/true, lt.vf);
      feats.factor = std::move(g_new);
      FeatureMatrix f_new = half_forward_trace(g, feats, p.fv_m, p.fv_q, p.fv_rows, p.fv_cols,
                                               /*to_factor=*/false, lt.fv);
      feats.node = std::move(f_new);
      traces.push_back(EntryTrace{std::move(lt)});
    } else if (const auto* dense = std::get_if<DensePairEntry>(&entry.op)) {
      DensePairTrace dt;
      const int out_cols = dense->net.output_dim() >= 0 ? dense->net.output_dim() : feats.node.cols;
      FeatureMatrix new_node(feats.node.rows, out_cols);
      dt.node_tr.resize(static_cast<std::size_t>(feats.node.rows));
      for (int r = 0; r < feats.node.rows; ++r) {
        net_forward_trace(dense->net, feats.node.row(r), dt.node_tr[static_cast<std::size_t>(r)]);
        const auto& y = dt.node_tr[static_cast<std::size_t>(r)].output;
        std::copy(y.begin(), y.end(), new_node.row(r).begin());
      }
      FeatureMatrix new_factor(feats.factor.rows, out_cols);
      dt.factor_tr.resize(static_cast<std::size_t>(feats.factor.rows));
      for (int r = 0; r < feats.factor.rows; ++r) {
        net_forward_trace(dense->net, feats.factor.row(r), dt.factor_tr[static_cast<std::size_t>(r)]);
        const auto& y = dt.factor_tr[static_cast<std::size_t>(r)].output;
        std::copy(y.begin(), y.end(), new_factor.row(r).begin());
      }
      feats.node = std::move(new_node);
      feats.factor = std::move(new_factor);
      traces.push_back(EntryTrace{std::move(dt)});
    } else {
      const auto& res = std::get<ResidualEntry>(entry.op);
      ResidualTrace rt;
      rt.input = feats;
      FeatureSet inner = trace_entries(res.inner, g, feats, rt.inner);
      FeatureMatrix skip_node = res.node_proj
                                    ? FeatureMatrix()
                                    : rt.input.node;
      if (res.node_proj) {
        skip_node = FeatureMatrix(rt.input.node.rows, res.node_proj->out_dim);
        std::vector<double> y;
        for (int r = 0; r < rt.input.node.rows; ++r) {
          affine_forward(*res.node_proj, rt.input.node.row(r), y);
          std::copy(y.begin(), y.end(), skip_node.row(r).begin());
        }
      }
      FeatureMatrix skip_factor = res.factor_proj ? FeatureMatrix() : rt.input.factor;
      if (res.factor_proj) {
        skip_factor = FeatureMatrix(rt.input.factor.rows, res.factor_proj->out_dim);
        std::vector<double> y;
        for (int r = 0; r < rt.input.factor.rows; ++r) {
          affine_forward(*res.factor_proj, rt.input.factor.row(r), y);
          std::copy(y.begin(), y.end(), skip_factor.row(r).begin());
        }
      }
      if (inner.node.rows != skip_node.rows || inner.node.cols != skip_node.cols ||
          inner.factor.rows != skip_factor.rows || inner.factor.cols != skip_factor.cols)
        throw ShapeError("residual add requires matching feature shapes");
      for (std::size_t j = 0; j < inner.node.data.size(); ++j) inner.node.data[j] += skip_node.data[j];
      for (std::size_t j = 0; j < inner.factor.data.size(); ++j)
        inner.factor.data[j] += skip_factor.data[j];
      feats = std::move(inner);
      traces.push_back(EntryTrace{std::move(rt)});
    }
  }
  return feats;
}

void backward_entries(const std::vector<StackEntry>& entries, const std::vector<EntryTrace>& traces,
                      const FactorGraph& g,
                      const std::unordered_map<const void*, std::size_t>& offsets,
                      std::vector<double>& grads, FeatureMatrix& dnode, FeatureMatrix& dfactor) {
  for (std::size_t k = entries.size(); k-- > 0;) {
    const auto& entry = entries[k];
    if (const auto* layer = std::get_if<FgnnLayerEntry>(&entry.op)) {
      const auto& lt = std::get<FgnnLayerTrace>(traces[k].t);
      const auto& p = layer->params;
      // FV backward: consumes dnode, contributes to d(g_mid) and d(f_in).
      FeatureMatrix dg_mid(g.num_factors(), lt.fv.g_cols);
      FeatureMatrix df_in(g.num_variables(), lt.fv.f_cols);
      half_backward(g, p.fv_m, p.fv_q, p.fv_rows, p.fv_cols, /*to_factor=*/false, lt.fv, dnode,
                    grads.data() + offsets.at(&p.fv_m), grads.data() + offsets.at(&p.fv_q), dg_mid,
                    df_in);
      // The layer's factor output IS g_mid, so downstream dfactor adds in.
      if (dfactor.rows != dg_mid.rows || dfactor.cols != dg_mid.cols)
        throw ShapeError("factor grad shape mismatch");
      for (std::size_t j = 0; j < dg_mid.data.size(); ++j) dg_mid.data[j] += dfactor.data[j];
      // VF backward: consumes dg_mid, contributes to d(g_in) and d(f_in).
      FeatureMatrix dg_in(g.num_factors(), lt.vf.g_cols);
      FeatureMatrix df_vf(g.num_variables(), lt.vf.f_cols);
      half_backward(g, p.vf_m, p.vf_q, p.vf_rows, p.vf_cols, /*to_factor=*/true, lt.vf, dg_mid,
                    grads.data() + offsets.at(&p.vf_m), grads.data() + offsets.at(&p.vf_q), dg_in,
                    df_vf);
      for (std::size_t j = 0; j < df_in.data.size(); ++j) df_in.data[j] += df_vf.data[j];
      dnode = std::move(df_in);
      dfactor = std::move(dg_in);
    } else if (const auto* dense = std::get_if<DensePairEntry>(&entry.op)) {
      const auto& dt = std::get<DensePairTrace>(traces[k].t);
      const int in_cols = dense->net.input_dim();
      FeatureMatrix dnode_in(dnode.rows, in_cols);
      FeatureMatrix dfactor_in(dfactor.rows, in_cols);
      std::vector<double> dx;
      double* gbase = grads.data() + offsets.at(&dense->net);
      for (int r = 0; r < dnode.rows; ++r) {
        net_backward(dense->net, dt.node_tr[static_cast<std::size_t>(r)], dnode.row(r), gbase, dx);
        std::copy(dx.begin(), dx.end(), dnode_in.row(r).begin());
      }
      for (int r = 0; r < dfactor.rows; ++r) {
        net_backward(dense->net, dt.factor_tr[static_cast<std::size_t>(r)], dfactor.row(r), gbase, dx);
        std::copy(dx.begin(), dx.end(), dfactor_in.row(r).begin());
      }
      dnode = std::move(dnode_in);
      dfactor = std::move(dfactor_in);
    } else {
      const auto& res = std::get<ResidualEntry>(entry.op);
      const auto& rt = std::get<ResidualTrace>(traces[k].t);
      FeatureMatrix dnode_inner = dnode;
      FeatureMatrix dfactor_inner = dfactor;
      backward_entries(res.inner, rt.inner, g, offsets, grads, dnode_inner, dfactor_inner);
      // Skip path: through the projection when present, else straight.
      auto add_proj = [&](const std::optional<AffineLayer>& proj, const FeatureMatrix& in_rows,
                          const FeatureMatrix& dout_rows, FeatureMatrix& dest) {
        if (!proj) {
          for (std::size_t j = 0; j < dest.data.size(); ++j) dest.data[j] += dout_rows.data[j];
          return;
        }
        double* gbase = grads.data() + offsets.at(&*proj);
        DenseNet wrapper;
        wrapper.append(*proj);
        NetTrace tr;
        std::vector<double> dx;
        for (int r = 0; r < in_rows.rows; ++r) {
          net_forward_trace(wrapper, in_rows.row(r), tr);  // cheap affine recompute
          net_backward(wrapper, tr, dout_rows.row(r), gbase, dx);
          for (int c = 0; c < dest.cols; ++c) dest.at(r, c) += dx[static_cast<std::size_t>(c)];
        }
      };
      add_proj(res.node_proj, rt.input.node, dnode, dnode_inner);
      add_proj(res.factor_proj, rt.input.factor, dfactor, dfactor_inner);
      dnode = std::move(dnode_inner);
      dfactor = std::move(dfactor_inner);
    }
  }
}

Assignment argmax_rows(const FeatureMatrix& m) {
  Assignment a;
  a.states.reserve(static_cast<std::size_t>(m.rows));
  for (int r = 0; r < m.rows; ++r) {
    int arg = 0;
    for (int c = 1; c < m.cols; ++c)
      if (m.at(r, c) > m.at(r, arg)) arg = c;
    a.states.push_back(arg);
  }
  return a;
}

std::vector<std::vector<double>> rows_as_vectors(const FeatureMatrix& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows));
  for (int r = 0; r < m.rows; ++r) out[static_cast<std::size_t>(r)].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

}  // namespace

ForwardTrace forward_trace(const FgnnStack& s, const FactorGraph& g, const FeatureSet& feats) {
  auto tape = std::make_shared<StackTape>();
  tape->input = feats;
  FeatureSet cur = trace_entries(s.entries, g, feats, tape->entries);
  if (s.readout) {
    tape->pre_readout_node = cur.node;
    const auto& ro = *s.readout;
    tape->readout_pre = FeatureMatrix(cur.node.rows, ro.out_dim);
    FeatureMatrix out(cur.node.rows, ro.out_dim);
    for (int r = 0; r < cur.node.rows; ++r) {
      for (int o = 0; o < ro.out_dim; ++o) {
        double acc = ro.bias[static_cast<std::size_t>(o)];
        const double* row = ro.weights.data() + static_cast<std::size_t>(o) * ro.in_dim;
        for (int c = 0; c < ro.in_dim; ++c) acc += row[c] * cur.node.at(r, c);
        tape->readout_pre.at(r, o) = acc;
        out.at(r, o) = ro.act == Activation::relu ? std::max(acc, 0.0) : acc;
      }
    }
    cur.node = std::move(out);
  }
  tape->output = cur;
  ForwardTrace ft;
  ft.output = std::move(cur);
  ft.tape = std::move(tape);
  return ft;
}

BackwardResult backward(const FgnnStack& s, const FactorGraph& g, StackTape& tape,
                        const Assignment& label) {
  if (tape.consumed) throw std::logic_error("gradient tape already consumed");
  tape.consumed = true;

  const FeatureMatrix& logits = tape.output.node;
  BackwardResult res;
  res.prediction = argmax_rows(logits);
  res.loss = loss_map_xent(rows_as_vectors(logits), label);
  res.grads.assign(stack_param_count(s), 0.0);

  const auto offsets = unit_offsets(s);
  const double inv_n = 1.0 / static_cast<double>(logits.rows);

  // d(loss)/d(logits): softmax minus one-hot, averaged over variables.
  FeatureMatrix dlogits(logits.rows, logits.cols);
  for (int r = 0; r < logits.rows; ++r) {
    double mx = logits.at(r, 0);
    for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(r, c));
    double z = 0.0;
    for (int c = 0; c < logits.cols; ++c) z += std::exp(logits.at(r, c) - mx);
    for (int c = 0; c < logits.cols; ++c)
      dlogits.at(r, c) = (std::exp(logits.at(r, c) - mx) / z -
                          (label.states[static_cast<std::size_t>(r)] == c ? 1.0 : 0.0)) *
                         inv_n;
  }

  FeatureMatrix dnode;
  if (s.readout) {
    const auto& ro = *s.readout;
    double* gbase = res.grads.data() + offsets.at(&ro);
    double* gb = gbase + ro.weights.size();
    dnode = FeatureMatrix(tape.pre_readout_node.rows, ro.in_dim);
    for (int r = 0; r < dlogits.rows; ++r)
      for (int o = 0; o < ro.out_dim; ++o) {
        double dv = dlogits.at(r, o);
        if (ro.act == Activation::relu && tape.readout_pre.at(r, o) <= 0.0) dv = 0.0;
        if (dv == 0.0) continue;
        gb[o] += dv;
        const double* row = ro.weights.data() + static_cast<std::size_t>(o) * ro.in_dim;
        double* gwr = gbase + static_cast<std::size_t>(o) * ro.in_dim;
        for (int c = 0; c < ro.in_dim; ++c) {
          gwr[c] += dv * tape.pre_readout_node.at(r, c);
          dnode.at(r, c) += dv * row[c];
        }
      }
  } else {
    dnode = std::move(dlogits);
  }

  FeatureMatrix dfactor(tape.output.factor.rows, tape.output.factor.cols);
  backward_entries(s.entries, tape.entries, g, offsets, res.grads, dnode, dfactor);
  return res;
}

BackwardResult backward(const FgnnStack& s, const FactorGraph& g, const FeatureSet& feats,
                        const Assignment& label) {
  ForwardTrace ft = forward_trace(s, g, feats);
  return backward(s, g, *ft.tape, label);
}

Assignment predict(const FgnnStack& s, const FactorGraph& g, const FeatureSet& feats) {
  const FeatureSet out = stack_forward(s, g, feats);
  Assignment a;
  a.states.reserve(static_cast<std::size_t>(out.node.rows));
  for (int r = 0; r < out.node.rows; ++r) {
    int arg = 0;
    for (int c = 1; c < out.node.cols; ++c)
      if (out.node.at(r, c) > out.node.at(r, arg)) arg = c;
    a.states.push_back(arg);
  }
  return a;
}

double evaluate_agreement(const FgnnStack& s, const std::vector<DatasetInstance>& data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& inst : data) total += agreement(predict(s, inst.graph, inst.features), inst.label);
  return total / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training

namespace {

void validate_config(const TrainConfig& cfg) {
  if (cfg.learning_rate < 0.0) throw std::invalid_argument("learning_rate must be >= 0");
  if (!(cfg.decay > 0.0 && cfg.decay <= 1.0)) throw std::invalid_argument("decay must be in (0, 1]");
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

struct InstanceResult {
  double loss = 0.0;
  double agreement = 0.0;
  std::vector<double> grads;
};

// Runs fn(i) for i in [0, n) on up to `jobs` workers.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  for (auto& t : pool) t.join();
}

}  // namespace

TrainResult train(const std::vector<DatasetInstance>& train_data,
                  const std::vector<DatasetInstance>& val_data, const TrainConfig& cfg,
                  const FgnnStack& arch, int jobs) {
  validate_config(cfg);
  if (train_data.empty()) throw std::invalid_argument("training dataset is empty");

  TrainResult result;
  result.stack = arch;
  init_params(result.stack, cfg.seed);

  const std::size_t n_params = stack_param_count(result.stack);
  std::vector<double> params = get_params(result.stack);
  std::vector<double> adam_m(n_params, 0.0), adam_v(n_params, 0.0);
  std::int64_t step = 0;

  SplitMix64 shuffle_rng(cfg.seed ^ 0x5DEECE66Dull);
  std::vector<int> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate * std::pow(cfg.decay, epoch);
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    double epoch_agree = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const int bsz = static_cast<int>(std::min(static_cast<std::size_t>(cfg.batch_size),
                                                order.size() - start));
      std::vector<InstanceResult> results(static_cast<std::size_t>(bsz));
      parallel_for(bsz, jobs, [&](int b) {
        const auto& inst = train_data[static_cast<std::size_t>(order[start + static_cast<std::size_t>(b)])];
        BackwardResult br = backward(result.stack, inst.graph, inst.features, inst.label);
        results[static_cast<std::size_t>(b)] =
            {br.loss, agreement(br.prediction, inst.label), std::move(br.grads)};
      });

      // Deterministic reduction in batch index order.
      std::vector<double> grad(n_params, 0.0);
      for (const auto& r : results) {
        for (std::size_t j = 0; j < n_params; ++j) grad[j] += r.grads[j];
        epoch_loss += r.loss;
        epoch_agree += r.agreement;
      }
      const double scale = 1.0 / bsz;
      for (double& v : grad) v *= scale;

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (std::size_t j = 0; j < n_params; ++j) {
        adam_m[j] = cfg.adam_beta1 * adam_m[j] + (1.0 - cfg.adam_beta1) * grad[j];
        adam_v[j] = cfg.adam_beta2 * adam_v[j] + (1.0 - cfg.adam_beta2) * grad[j] * grad[j];
        params[j] -= lr * (adam_m[j] / bc1) / (std::sqrt(adam_v[j] / bc2) + cfg.adam_eps);
      }
      set_params(result.stack, params);
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.loss = epoch_loss / static_cast<double>(train_data.size());
    log.train_agreement = epoch_agree / static_cast<double>(train_data.size());
    log.val_agreement = val_data.empty() ? 0.0 : evaluate_agreement(result.stack, val_data);
    result.log.push_back(log);
  }
  return result;
}

FgnnStack make_desk_arch(int node_dim, int factor_dim, int edge_dim, int width, int classes) {
  if (width < 2 || classes < 2) throw std::invalid_argument("width and classes must be >= 2");
  const int cols = std::max(4, width / 2);

  auto fgnn_layer = [&](int g_dim, int f_dim) {
    FgnnLayerParams p;
    p.vf_m.append(AffineLayer(g_dim + f_dim, width, Activation::relu));
    p.vf_m.append(AffineLayer(width, cols, Activation::identity));
    p.vf_q.append(AffineLayer(edge_dim, width * cols, Activation::identity));
    p.vf_rows = width;
    p.vf_cols = cols;
    // The FV half reads the factor features the VF half just produced.
    p.fv_m.append(AffineLayer(width + f_dim, width, Activation::relu));
    p.fv_m.append(AffineLayer(width, cols, Activation::identity));
    p.fv_q.append(AffineLayer(edge_dim, width * cols, Activation::identity));
    p.fv_rows = width;
    p.fv_cols = cols;
    return p;
  };
  auto fc = [&](int in) {
    DensePairEntry d;
    d.net.append(AffineLayer(in, width, Activation::relu));
    return d;
  };

  FgnnStack s;
  s.entries.push_back(StackEntry{FgnnLayerEntry{fgnn_layer(factor_dim, node_dim)}});
  ResidualEntry res;
  res.inner.push_back(StackEntry{fc(width)});
  res.inner.push_back(StackEntry{FgnnLayerEntry{fgnn_layer(width, width)}});
  res.inner.push_back(StackEntry{fc(width)});
  s.entries.push_back(StackEntry{std::move(res)});
  s.entries.push_back(StackEntry{FgnnLayerEntry{fgnn_layer(width, width)}});
  s.readout = AffineLayer(width, classes, Activation::identity);
  return s;
}

}  // namespace fgnn
