#include "fgnn/exactparam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fgnn {

namespace {

// Affine functional over a net's input vector.
struct AffineFunc {
  std::vector<double> w;
  double b = 0.0;
};

AffineFunc coord(int dim, int at, double scale = 1.0) {
  AffineFunc f;
  f.w.assign(static_cast<std::size_t>(dim), 0.0);
  f.w[static_cast<std::size_t>(at)] = scale;
  return f;
}

AffineFunc combine(const AffineFunc& a, const AffineFunc& b, double sa, double sb) {
  AffineFunc f;
  f.w.resize(a.w.size());
  for (std::size_t i = 0; i < a.w.size(); ++i) f.w[i] = sa * a.w[i] + sb * b.w[i];
  f.b = sa * a.b + sb * b.b;
  return f;
}

AffineFunc negate(const AffineFunc& a) { return combine(a, a, -1.0, 0.0); }

// Builds a net computing, per group, the max of its candidate functionals,
// alongside verbatim passthrough functionals. Each tournament round costs a
// relu layer and an identity layer; passthrough values ride through the relu
// layers as (relu(v), relu(-v)) pairs. Output rows are the passthroughs
// followed by the group maxima. All groups must share one candidate count.
DenseNet build_parallel_max_net(int input_dim, std::vector<std::vector<AffineFunc>> groups,
                                std::vector<AffineFunc> passthrough) {
  DenseNet net;
  std::size_t cand = groups.empty() ? 1 : groups.front().size();
  for (const auto& g : groups)
    if (g.size() != cand || g.empty()) throw ShapeError("max groups must share a candidate count");

  int cur_dim = input_dim;
  auto materialize = [&](const std::vector<AffineFunc>& rows, Activation act) {
    std::vector<double> w;
    std::vector<double> b;
    w.reserve(rows.size() * static_cast<std::size_t>(cur_dim));
    for (const auto& r : rows) {
      if (static_cast<int>(r.w.size()) != cur_dim) throw ShapeError("functional width mismatch");
      w.insert(w.end(), r.w.begin(), r.w.end());
      b.push_back(r.b);
    }
    net.append(AffineLayer(cur_dim, static_cast<int>(rows.size()), std::move(w), std::move(b), act));
    cur_dim = static_cast<int>(rows.size());
  };

  while (cand > 1) {
    // ReLU layer: per pair (a, b) emit relu(a-b), relu(b), relu(-b); odd
    // leftovers and passthroughs ride as (relu(v), relu(-v)).
    std::vector<AffineFunc> relu_rows;
    struct PairRef {
      int kind;  // 0 pair, 1 single
      std::size_t base;
    };
    std::vector<std::vector<PairRef>> refs(groups.size());
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& vals = groups[gi];
      for (std::size_t p = 0; p + 1 < vals.size(); p += 2) {
        refs[gi].push_back({0, relu_rows.size()});
        relu_rows.push_back(combine(vals[p], vals[p + 1], 1.0, -1.0));
        relu_rows.push_back(vals[p + 1]);
        relu_rows.push_back(negate(vals[p + 1]));
      }
      if (vals.size() % 2 == 1) {
        refs[gi].push_back({1, relu_rows.size()});
        relu_rows.push_back(vals.back());
        relu_rows.push_back(negate(vals.back()));
      }
    }
    std::vector<std::size_t> pass_base(passthrough.size());
    for (std::size_t pi = 0; pi < passthrough.size(); ++pi) {
      pass_base[pi] = relu_rows.size();
      relu_rows.push_back(passthrough[pi]);
      relu_rows.push_back(negate(passthrough[pi]));
    }
    materialize(relu_rows, Activation::relu);

    // Identity layer materializing the reduced values: passthroughs first so
    // the final round's layer is already the output.
    std::vector<AffineFunc> id_rows;
    for (std::size_t pi = 0; pi < passthrough.size(); ++pi) {
      AffineFunc f = combine(coord(cur_dim, static_cast<int>(pass_base[pi])),
                             coord(cur_dim, static_cast<int>(pass_base[pi] + 1)), 1.0, -1.0);
      id_rows.push_back(std::move(f));
    }
    const std::size_t group_start = id_rows.size();
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      for (const auto& ref : refs[gi]) {
        AffineFunc f;
        if (ref.kind == 0) {
          f = coord(cur_dim, static_cast<int>(ref.base));
          f.w[ref.base + 1] = 1.0;
          f.w[ref.base + 2] = -1.0;
        } else {
          f = combine(coord(cur_dim, static_cast<int>(ref.base)),
                      coord(cur_dim, static_cast<int>(ref.base + 1)), 1.0, -1.0);
        }
        id_rows.push_back(std::move(f));
      }
    }
    materialize(id_rows, Activation::identity);

    // Rebind functionals to the new front.
    for (std::size_t pi = 0; pi < passthrough.size(); ++pi)
      passthrough[pi] = coord(cur_dim, static_cast<int>(pi));
    std::size_t at = group_start;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      std::vector<AffineFunc> next;
      next.reserve(refs[gi].size());
      for (std::size_t r = 0; r < refs[gi].size(); ++r)
        next.push_back(coord(cur_dim, static_cast<int>(at++)));
      groups[gi] = std::move(next);
    }
    cand = (cand + 1) / 2;
  }

  if (net.empty()) {
    // Single-candidate groups: one identity layer assembling the outputs.
    std::vector<AffineFunc> rows = passthrough;
    for (const auto& g : groups) rows.push_back(g.front());
    materialize(rows, Activation::identity);
  }
  return net;
}

}  // namespace

DenseNet build_max_net(int n) {
  if (n < 1) throw std::invalid_argument("max net needs n >= 1");
  if (n == 1) return DenseNet{};  // identity

  std::vector<std::vector<AffineFunc>> groups(1);
  for (int j = 0; j < n; ++j) groups[0].push_back(coord(n, j));
  DenseNet net = build_parallel_max_net(n, std::move(groups), {});

  int rounds = 0;
  while ((1 << rounds) < n) ++rounds;  // ceil(log2 n)
  if (static_cast<int>(net.layers().size()) != 2 * rounds)
    throw std::logic_error("max net depth bound violated");
  if (net.max_width() > 2 * n) throw std::logic_error("max net width bound violated");
  return net;
}

std::vector<double> SumViaMaxGadget::apply(const Tensor& x) const {
  if (x.shape() != std::vector<int>{m, n}) throw ShapeError("gadget input must be m x n");
  for (double v : x.values())
    if (v < 0.0) throw std::domain_error("sum-via-max gadget requires non-negative inputs");

  const int mn = m * n;
  // y_ik = sum_j x_ij w_ijk, then yhat_k = max_i y_ik.
  std::vector<double> yhat(static_cast<std::size_t>(mn), -std::numeric_limits<double>::infinity());
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < mn; ++k) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j)
        acc += x[static_cast<std::int64_t>(i) * n + j] *
               w[(static_cast<std::int64_t>(i) * n + j) * mn + k];
      yhat[static_cast<std::size_t>(k)] = std::max(yhat[static_cast<std::size_t>(k)], acc);
    }
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int k = 0; k < mn; ++k) acc += q[static_cast<std::int64_t>(j) * mn + k] * yhat[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

SumViaMaxGadget build_sum_via_max(int m, int n) {
  if (m < 1 || n < 1) throw std::invalid_argument("gadget dims must be >= 1");
  SumViaMaxGadget g;
  g.m = m;
  g.n = n;
  g.w = Tensor({m, n, m * n});
  g.q = Tensor({n, m * n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      g.w[(static_cast<std::int64_t>(i) * n + j) * (m * n) + (i * n + j)] = 1.0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) g.q[static_cast<std::int64_t>(j) * (m * n) + (i * n + j)] = 1.0;
  return g;
}

EmulatorLayout EmulatorLayout::analyze(const FactorGraph& g) {
  EmulatorLayout lay;
  for (const auto& v : g.variables()) lay.max_card = std::max(lay.max_card, v.cardinality);
  for (const auto& f : g.factors()) {
    lay.max_arity = std::max(lay.max_arity, static_cast<int>(f.scope.size()));
    lay.max_z = std::max(lay.max_z, static_cast<int>(f.log_potential.size()));
  }
  lay.var_factors = g.factors_of_variables();
  for (const auto& inc : lay.var_factors)
    lay.max_degree = std::max(lay.max_degree, static_cast<int>(inc.size()));

  lay.factor_slots.resize(g.factors().size());
  for (int c = 0; c < g.num_factors(); ++c)
    for (int id : g.factors()[static_cast<std::size_t>(c)].scope)
      lay.factor_slots[static_cast<std::size_t>(c)].push_back(g.var_index(id));

  const auto edges = g.edges();
  lay.num_edges = static_cast<int>(edges.size());
  lay.edge_of.clear();
  for (int c = 0, e = 0; c < g.num_factors(); ++c)
    for (std::size_t s = 0; s < lay.factor_slots[static_cast<std::size_t>(c)].size(); ++s)
      lay.edge_of.push_back(e++);

  lay.table_block = lay.max_card * lay.max_z;
  lay.tables_width = lay.max_arity * lay.table_block;
  return lay;
}

FeatureSet emulator_features(const FactorGraph& g) {
  const auto lay = EmulatorLayout::analyze(g);
  FeatureSet feats;
  feats.node = FeatureMatrix(g.num_variables(), lay.f0_width());
  for (int i = 0; i < g.num_variables(); ++i) {
    const auto& v = g.variables()[static_cast<std::size_t>(i)];
    for (int x = 0; x < v.cardinality; ++x) feats.node.at(i, x) = v.log_potential[static_cast<std::size_t>(x)];
  }
  feats.factor = FeatureMatrix(g.num_factors(), lay.g0_width());
  for (int c = 0; c < g.num_factors(); ++c) {
    const auto& vals = g.factors()[static_cast<std::size_t>(c)].log_potential.values();
    for (std::size_t z = 0; z < vals.size(); ++z) feats.factor.at(c, static_cast<int>(z)) = vals[z];
  }
  feats.edge = FeatureMatrix(lay.num_edges, lay.num_edges);
  for (int e = 0; e < lay.num_edges; ++e) feats.edge.at(e, e) = 1.0;
  return feats;
}

namespace {

void require_shifted(const FactorGraph& g, bool check_vars) {
  for (const auto& f : g.factors())
    if (f.log_potential.min() < 1.0)
      throw std::domain_error("emulator builders require factor log-potentials >= 1");
  if (check_vars)
    for (const auto& v : g.variables())
      for (double x : v.log_potential)
        if (x < 0.0) throw std::domain_error("emulator builders require variable log-potentials >= 0");
}

// Single-linear-layer Q net over one-hot edge features: column e of the
// weight matrix is the flattened per-edge matrix.
struct QBuilder {
  int rows, cols, num_edges;
  std::vector<double> w;

  QBuilder(int r, int c, int e)
      : rows(r), cols(c), num_edges(e),
        w(static_cast<std::size_t>(r) * c * e, 0.0) {}

  // Entry (r, c) of edge e's matrix.
  double& at(int e, int r, int c) {
    return w[(static_cast<std::size_t>(r) * cols + c) * num_edges + e];
  }

  DenseNet net() && {
    DenseNet q;
    q.append(AffineLayer(num_edges, rows * cols, std::move(w),
                         std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0),
                         Activation::identity));
    return q;
  }
};

// Candidate functionals b_i(x) over the node feature block of the M input:
// theta alone right after the decomposition layer, theta plus the per-factor
// message blocks afterwards (the absorbed linear layer).
AffineFunc belief_func(const EmulatorLayout& lay, int in_dim, int f_off, int x, bool with_messages) {
  AffineFunc b = coord(in_dim, f_off + x);
  if (with_messages)
    for (int d = 0; d < lay.max_degree; ++d)
      b.w[static_cast<std::size_t>(f_off + lay.max_card + d * lay.max_card + x)] = 1.0;
  return b;
}

}  // namespace

std::pair<FgnnLayerParams, FeatureSet> build_decomposition_layer(const FactorGraph& g) {
  require_shifted(g, false);
  const auto lay = EmulatorLayout::analyze(g);
  const int g0 = lay.g0_width();
  const int f0 = lay.f0_width();
  const int tables2 = 2 * lay.tables_width;

  FgnnLayerParams p;

  // VF M: [g_c, f_i] -> [g_c, 1]; the constant channel feeds the penalty
  // entries of the per-edge Q matrices.
  {
    std::vector<double> w(static_cast<std::size_t>(g0 + 1) * (g0 + f0), 0.0);
    std::vector<double> b(static_cast<std::size_t>(g0 + 1), 0.0);
    for (int z = 0; z < g0; ++z) w[static_cast<std::size_t>(z) * (g0 + f0) + z] = 1.0;
    b[static_cast<std::size_t>(g0)] = 1.0;
    p.vf_m.append(AffineLayer(g0 + f0, g0 + 1, std::move(w), std::move(b), Activation::identity));
  }
  p.vf_cols = g0 + 1;
  p.vf_rows = tables2;
  QBuilder vq(p.vf_rows, p.vf_cols, lay.num_edges);

  int e = 0;
  for (int c = 0; c < g.num_factors(); ++c) {
    const auto& f = g.factors()[static_cast<std::size_t>(c)];
    const auto cards = g.scope_cardinalities(f);
    const int arity = static_cast<int>(cards.size());
    const std::int64_t zc = f.log_potential.size();
    const double penalty = arity * f.log_potential.max_abs() + 1.0;

    std::vector<std::int64_t> stride(static_cast<std::size_t>(arity), 1);
    for (int s = arity - 2; s >= 0; --s)
      stride[static_cast<std::size_t>(s)] =
          stride[static_cast<std::size_t>(s + 1)] * cards[static_cast<std::size_t>(s + 1)];

    for (int slot = 0; slot < arity; ++slot, ++e) {
      const int k = cards[static_cast<std::size_t>(slot)];
      for (int x = 0; x < k; ++x)
        for (std::int64_t z = 0; z < zc; ++z) {
          const int row_in_block = x * lay.max_z + static_cast<int>(z);
          const int pos_row = slot * lay.table_block + row_in_block;
          const int neg_row = lay.tables_width + slot * lay.table_block + row_in_block;
          const int xz = static_cast<int>((z / stride[static_cast<std::size_t>(slot)]) % k);
          if (xz == x)
            vq.at(e, pos_row, static_cast<int>(z)) = 1.0 / arity;
          else
            vq.at(e, neg_row, g0) = penalty;
        }
    }
  }
  p.vf_q = std::move(vq).net();

  // FV half: pass the node potentials through unchanged.
  {
    std::vector<double> w(static_cast<std::size_t>(f0) * (g0 + f0), 0.0);
    for (int x = 0; x < f0; ++x) w[static_cast<std::size_t>(x) * (g0 + f0) + g0 + x] = 1.0;
    p.fv_m.append(AffineLayer(g0 + f0, f0, std::move(w),
                              std::vector<double>(static_cast<std::size_t>(f0), 0.0),
                              Activation::identity));
  }
  p.fv_rows = f0;
  p.fv_cols = f0;
  QBuilder fq(f0, f0, lay.num_edges);
  for (int ee = 0; ee < lay.num_edges; ++ee)
    for (int x = 0; x < f0; ++x) fq.at(ee, x, x) = 1.0;
  p.fv_q = std::move(fq).net();

  return {std::move(p), emulator_features(g)};
}

namespace {

// One BP iteration as an FGNN layer. `first` marks the layer right after the
// decomposition layer, whose node features are still bare potentials.
FgnnLayerParams build_bp_layer(const FactorGraph& g, const EmulatorLayout& lay, bool first) {
  const int tables2 = 2 * lay.tables_width;
  const int mu_width = lay.max_arity * lay.max_z;
  const int g_in = first ? tables2 : tables2 + mu_width;
  const int f_in = first ? lay.f0_width() : lay.f_bp_width();
  const int in_dim = g_in + f_in;

  FgnnLayerParams p;

  // --- VF: per-slot max-marginals mu_s(z) = max_x [t_s(x, z) + b(x)].
  {
    std::vector<AffineFunc> passthrough;
    passthrough.reserve(static_cast<std::size_t>(tables2));
    for (int t = 0; t < tables2; ++t) passthrough.push_back(coord(in_dim, t));

    std::vector<std::vector<AffineFunc>> groups;
    groups.reserve(static_cast<std::size_t>(mu_width));
    for (int s = 0; s < lay.max_arity; ++s)
      for (int z = 0; z < lay.max_z; ++z) {
        std::vector<AffineFunc> cands;
        cands.reserve(static_cast<std::size_t>(lay.max_card));
        for (int x = 0; x < lay.max_card; ++x) {
          AffineFunc t = belief_func(lay, in_dim, g_in, x, !first);
          const int base = s * lay.table_block + x * lay.max_z + z;
          t.w[static_cast<std::size_t>(base)] += 1.0;
          t.w[static_cast<std::size_t>(lay.tables_width + base)] -= 1.0;
          cands.push_back(std::move(t));
        }
        groups.push_back(std::move(cands));
      }
    p.vf_m = build_parallel_max_net(in_dim, std::move(groups), std::move(passthrough));
  }
  p.vf_cols = tables2 + mu_width;
  p.vf_rows = tables2 + mu_width;
  QBuilder vq(p.vf_rows, p.vf_cols, lay.num_edges);
  {
    int e = 0;
    for (int c = 0; c < g.num_factors(); ++c) {
      const auto& slots = lay.factor_slots[static_cast<std::size_t>(c)];
      const int zc = static_cast<int>(g.factors()[static_cast<std::size_t>(c)].log_potential.size());
      for (int slot = 0; slot < static_cast<int>(slots.size()); ++slot, ++e) {
        for (int t = 0; t < tables2; ++t) vq.at(e, t, t) = 1.0;  // identical-copy passthrough
        for (int z = 0; z < zc; ++z) {
          const int r = tables2 + slot * lay.max_z + z;
          vq.at(e, r, r) = 1.0;  // route this slot's marginals, zero the rest
        }
      }
    }
  }
  p.vf_q = std::move(vq).net();

  // --- FV: messages mhat_s(x) = max_z [t_s(x, z) + sum_{s' != s} mu_s'(z)].
  const int g_mid = tables2 + mu_width;  // factor features after this layer's VF half
  const int fv_in = g_mid + f_in;
  {
    std::vector<AffineFunc> passthrough;
    passthrough.reserve(static_cast<std::size_t>(lay.max_card));
    for (int x = 0; x < lay.max_card; ++x) passthrough.push_back(coord(fv_in, g_mid + x));

    std::vector<std::vector<AffineFunc>> groups;
    groups.reserve(static_cast<std::size_t>(lay.max_arity * lay.max_card));
    for (int s = 0; s < lay.max_arity; ++s)
      for (int x = 0; x < lay.max_card; ++x) {
        std::vector<AffineFunc> cands;
        cands.reserve(static_cast<std::size_t>(lay.max_z));
        for (int z = 0; z < lay.max_z; ++z) {
          AffineFunc t = coord(fv_in, s * lay.table_block + x * lay.max_z + z);
          t.w[static_cast<std::size_t>(lay.tables_width + s * lay.table_block + x * lay.max_z + z)] = -1.0;
          for (int other = 0; other < lay.max_arity; ++other)
            if (other != s) t.w[static_cast<std::size_t>(tables2 + other * lay.max_z + z)] = 1.0;
          cands.push_back(std::move(t));
        }
        groups.push_back(std::move(cands));
      }
    p.fv_m = build_parallel_max_net(fv_in, std::move(groups), std::move(passthrough));
  }
  p.fv_cols = lay.max_card + lay.max_arity * lay.max_card;
  p.fv_rows = lay.f_bp_width();
  QBuilder fq(p.fv_rows, p.fv_cols, lay.num_edges);
  {
    int e = 0;
    for (int c = 0; c < g.num_factors(); ++c) {
      const auto& slots = lay.factor_slots[static_cast<std::size_t>(c)];
      for (int slot = 0; slot < static_cast<int>(slots.size()); ++slot, ++e) {
        const int vi = slots[static_cast<std::size_t>(slot)];
        const auto& incident = lay.var_factors[static_cast<std::size_t>(vi)];
        const int d0 = static_cast<int>(std::find(incident.begin(), incident.end(), c) - incident.begin());
        const int ki = g.variables()[static_cast<std::size_t>(vi)].cardinality;
        for (int x = 0; x < lay.max_card; ++x) fq.at(e, x, x) = 1.0;  // theta passthrough
        for (int x = 0; x < ki; ++x)
          fq.at(e, lay.max_card + d0 * lay.max_card + x, lay.max_card + slot * lay.max_card + x) = 1.0;
      }
    }
  }
  p.fv_q = std::move(fq).net();
  return p;
}

}  // namespace

FgnnStack build_bp_emulator(const FactorGraph& g, int k) {
  if (k < 0) throw std::invalid_argument("iteration count must be >= 0");
  require_shifted(g, true);
  const auto lay = EmulatorLayout::analyze(g);

  FgnnStack stack;
  auto [decomp_params, feats] = build_decomposition_layer(g);
  (void)feats;
  stack.entries.push_back(StackEntry{FgnnLayerEntry{std::move(decomp_params)}});
  for (int it = 0; it < k; ++it)
    stack.entries.push_back(StackEntry{FgnnLayerEntry{build_bp_layer(g, lay, it == 0)}});

  // Final linear readout: b(x) = theta(x) + sum_d m_d(x); bare potentials
  // when no iteration ran.
  const int f_last = k == 0 ? lay.f0_width() : lay.f_bp_width();
  std::vector<double> w(static_cast<std::size_t>(lay.max_card) * f_last, 0.0);
  for (int x = 0; x < lay.max_card; ++x) {
    w[static_cast<std::size_t>(x) * f_last + x] = 1.0;
    if (k > 0)
      for (int d = 0; d < lay.max_degree; ++d)
        w[static_cast<std::size_t>(x) * f_last + lay.max_card + d * lay.max_card + x] = 1.0;
  }
  stack.readout = AffineLayer(f_last, lay.max_card, std::move(w),
                              std::vector<double>(static_cast<std::size_t>(lay.max_card), 0.0),
                              Activation::identity);
  return stack;
}

std::vector<std::vector<double>> emulator_beliefs(const FgnnStack& stack, const FactorGraph& g) {
  const FeatureSet out = stack_forward(stack, g, emulator_features(g));
  std::vector<std::vector<double>> beliefs(static_cast<std::size_t>(g.num_variables()));
  for (int i = 0; i < g.num_variables(); ++i) {
    const int k = g.variables()[static_cast<std::size_t>(i)].cardinality;
    const auto row = out.node.row(i);
    beliefs[static_cast<std::size_t>(i)].assign(row.begin(), row.begin() + k);
  }
  return beliefs;
}

}  // namespace fgnn
