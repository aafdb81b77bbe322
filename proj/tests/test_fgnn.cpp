#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "fgnn/fgnn.hpp"
#include "fgnn/rng.hpp"
#include "fgnn/serialize.hpp"

using namespace fgnn;

namespace {

// Q net that always outputs the flattened identity matrix, whatever the edge
// feature is.
DenseNet constant_identity_q(int edge_dim, int n) {
  std::vector<double> w(static_cast<std::size_t>(n) * n * edge_dim, 0.0);
  std::vector<double> b(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(i) * n + i] = 1.0;
  DenseNet net;
  net.append(AffineLayer(edge_dim, n * n, std::move(w), std::move(b), Activation::identity));
  return net;
}

// M that selects the node-feature block of [g_c, f_i].
DenseNet select_node_block(int g_dim, int f_dim) {
  std::vector<double> w(static_cast<std::size_t>(f_dim) * (g_dim + f_dim), 0.0);
  for (int i = 0; i < f_dim; ++i) w[static_cast<std::size_t>(i) * (g_dim + f_dim) + g_dim + i] = 1.0;
  DenseNet net;
  net.append(AffineLayer(g_dim + f_dim, f_dim, std::move(w),
                         std::vector<double>(static_cast<std::size_t>(f_dim), 0.0),
                         Activation::identity));
  return net;
}

FeatureSet simple_feats(const FactorGraph& g, int f_dim, int g_dim, int t_dim, std::uint64_t seed) {
  SplitMix64 rng(seed);
  FeatureSet feats;
  feats.node = FeatureMatrix(g.num_variables(), f_dim);
  for (auto& v : feats.node.data) v = rng.next_uniform(-1.0, 1.0);
  feats.factor = FeatureMatrix(g.num_factors(), g_dim);
  for (auto& v : feats.factor.data) v = rng.next_uniform(-1.0, 1.0);
  feats.edge = FeatureMatrix(static_cast<int>(g.edges().size()), t_dim);
  for (auto& v : feats.edge.data) v = rng.next_uniform(-1.0, 1.0);
  return feats;
}

FgnnLayerParams random_layer(int g_dim, int f_dim, int t_dim, int width, std::uint64_t seed,
                             bool sequential = false) {
  SplitMix64 prng(seed);
  FgnnLayerParams p;
  p.vf_m.append(AffineLayer(g_dim + f_dim, width, Activation::relu));
  p.vf_q.append(AffineLayer(t_dim, width * width, Activation::identity));
  p.vf_rows = width;
  p.vf_cols = width;
  const int fv_g = sequential ? width : g_dim;
  p.fv_m.append(AffineLayer(fv_g + f_dim, width, Activation::relu));
  p.fv_q.append(AffineLayer(t_dim, width * width, Activation::identity));
  p.fv_rows = width;
  p.fv_cols = width;
  for (auto* net : {&p.vf_m, &p.vf_q, &p.fv_m, &p.fv_q})
    for (auto& l : net->layers())
      for (auto& w : l.weights) w = prng.next_uniform(-1.0, 1.0);
  return p;
}

}  // namespace

TEST_CASE("vf_layer identity gadget forwards the single neighbor's features") {
  const FactorGraph g({{0, 2, {0, 0}}}, {{0, {0}, Tensor({2}, {0, 0})}});
  FeatureSet feats;
  feats.node = FeatureMatrix(1, 2);
  feats.node.at(0, 0) = 0.25;
  feats.node.at(0, 1) = -0.5;
  feats.factor = FeatureMatrix(1, 2);
  feats.edge = FeatureMatrix(1, 1);
  feats.edge.at(0, 0) = 1.0;

  FgnnLayerParams p;
  p.vf_m = select_node_block(2, 2);
  p.vf_q = constant_identity_q(1, 2);
  p.vf_rows = 2;
  p.vf_cols = 2;
  const auto out = vf_layer(g, feats, p);
  CHECK(out.at(0, 0) == 0.25);
  CHECK(out.at(0, 1) == -0.5);
}

TEST_CASE("vf_layer takes the elementwise max over incident variables") {
  const FactorGraph g({{0, 2, {0, 0}}, {1, 2, {0, 0}}},
                      {{0, {0, 1}, Tensor({2, 2}, {0, 0, 0, 0})}});
  FeatureSet feats;
  feats.node = FeatureMatrix(2, 2);
  feats.node.at(0, 0) = 1;
  feats.node.at(0, 1) = 4;
  feats.node.at(1, 0) = 3;
  feats.node.at(1, 1) = 2;
  feats.factor = FeatureMatrix(1, 1);
  feats.edge = FeatureMatrix(2, 1);

  FgnnLayerParams p;
  p.vf_m = select_node_block(1, 2);
  p.vf_q = constant_identity_q(1, 2);
  p.vf_rows = 2;
  p.vf_cols = 2;
  const auto out = vf_layer(g, feats, p);
  CHECK(out.at(0, 0) == 3.0);
  CHECK(out.at(0, 1) == 4.0);
}

TEST_CASE("fv_layer mirrors vf_layer over incident factors") {
  const FactorGraph g({{0, 2, {0, 0}}},
                      {{0, {0}, Tensor({2}, {0, 0})}, {1, {0}, Tensor({2}, {0, 0})}});
  FeatureSet feats;
  feats.node = FeatureMatrix(1, 1);
  feats.factor = FeatureMatrix(2, 2);
  feats.factor.at(0, 0) = 0;
  feats.factor.at(0, 1) = 9;
  feats.factor.at(1, 0) = 5;
  feats.factor.at(1, 1) = 1;
  feats.edge = FeatureMatrix(2, 1);

  FgnnLayerParams p;
  // M selects the factor block this time.
  std::vector<double> w(static_cast<std::size_t>(2) * 3, 0.0);
  w[0] = 1.0;
  w[static_cast<std::size_t>(1) * 3 + 1] = 1.0;
  p.fv_m.append(AffineLayer(3, 2, std::move(w), {0.0, 0.0}, Activation::identity));
  p.fv_q = constant_identity_q(1, 2);
  p.fv_rows = 2;
  p.fv_cols = 2;
  const auto out = fv_layer(g, feats, p);
  CHECK(out.at(0, 0) == 5.0);
  CHECK(out.at(0, 1) == 9.0);
}

TEST_CASE("edge enumeration order does not change layer outputs") {
  const FactorGraph g({{0, 2, {0, 0}}, {1, 2, {0, 0}}, {2, 2, {0, 0}}},
                      {{0, {0, 1, 2}, Tensor({2, 2, 2})}, {1, {2, 0}, Tensor({2, 2})}});
  const FactorGraph g_perm({{0, 2, {0, 0}}, {1, 2, {0, 0}}, {2, 2, {0, 0}}},
                           {{0, {2, 0, 1}, Tensor({2, 2, 2})}, {1, {2, 0}, Tensor({2, 2})}});
  auto feats = simple_feats(g, 3, 2, 2, 11);
  FeatureSet feats_perm = feats;
  // edges of g: (0,0),(0,1),(0,2),(1,2),(1,0); g_perm: (0,2),(0,0),(0,1),(1,2),(1,0)
  const int perm[] = {1, 2, 0, 3, 4};  // g edge e lands at row perm[e]
  for (int e = 0; e < 5; ++e)
    for (int c = 0; c < 2; ++c) feats_perm.edge.at(perm[e], c) = feats.edge.at(e, c);

  const auto p = random_layer(2, 3, 2, 4, 7);
  const auto a = vf_layer(g, feats, p);
  const auto b = vf_layer(g_perm, feats_perm, p);
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < a.cols; ++c) CHECK(a.at(r, c) == b.at(r, c));
  const auto fa = fv_layer(g, feats, p);
  const auto fb = fv_layer(g_perm, feats_perm, p);
  for (int r = 0; r < fa.rows; ++r)
    for (int c = 0; c < fa.cols; ++c) CHECK(fa.at(r, c) == fb.at(r, c));
}

TEST_CASE("aggregate_max properties") {
  CHECK_THROWS_AS(aggregate_max({}), StructureError);
  // Monotone: raising any single entry never lowers the aggregate.
  SplitMix64 rng(5);
  for (int it = 0; it < 50; ++it) {
    std::vector<std::vector<double>> items(3, std::vector<double>(4));
    for (auto& v : items)
      for (auto& x : v) x = rng.next_uniform(-2, 2);
    const auto base = aggregate_max(items);
    const std::size_t i = rng.next_below(3), j = rng.next_below(4);
    items[i][j] += rng.next_unit() + 0.1;
    const auto bumped = aggregate_max(items);
    for (std::size_t k = 0; k < 4; ++k) CHECK(bumped[k] >= base[k]);
    // Permutation invariance.
    std::swap(items[0], items[2]);
    CHECK(aggregate_max(items) == bumped);
  }
}

TEST_CASE("layer structure errors") {
  const FactorGraph isolated({{0, 2, {0, 0}}, {1, 2, {0, 0}}}, {{0, {0}, Tensor({2}, {0, 0})}});
  auto feats = simple_feats(isolated, 2, 2, 1, 1);
  FgnnLayerParams p;
  p.fv_m = select_node_block(2, 2);
  p.fv_q = constant_identity_q(1, 2);
  p.fv_rows = 2;
  p.fv_cols = 2;
  CHECK_THROWS_AS(fv_layer(isolated, feats, p), StructureError);  // variable 1 isolated

  FgnnLayerParams bad;
  bad.vf_m = select_node_block(2, 2);
  bad.vf_q = constant_identity_q(3, 2);  // edge dim mismatch
  bad.vf_rows = 2;
  bad.vf_cols = 2;
  CHECK_THROWS_AS(vf_layer(isolated, feats, bad), ShapeError);
}

TEST_CASE("empty stack is the identity; readout applies per node") {
  const FactorGraph g({{0, 2, {0, 0}}}, {{0, {0}, Tensor({2}, {0, 0})}});
  auto feats = simple_feats(g, 3, 2, 1, 9);
  const FgnnStack empty;
  const auto out = stack_forward(empty, g, feats);
  CHECK(out.node.data == feats.node.data);
  CHECK(out.factor.data == feats.factor.data);

  FgnnStack ro;
  ro.readout = AffineLayer(3, 1, {1.0, 1.0, 1.0}, {0.5}, Activation::identity);
  const auto out2 = stack_forward(ro, g, feats);
  CHECK(out2.node.at(0, 0) ==
        doctest::Approx(feats.node.at(0, 0) + feats.node.at(0, 1) + feats.node.at(0, 2) + 0.5));
}

TEST_CASE("residual block with zero inner weights is the identity") {
  const FactorGraph g({{0, 2, {0, 0}}}, {{0, {0}, Tensor({2}, {0, 0})}});
  auto feats = simple_feats(g, 2, 2, 1, 13);

  ResidualEntry res;
  DensePairEntry zero;
  zero.net.append(AffineLayer(2, 2, Activation::identity));  // zero weights and bias
  res.inner.push_back(StackEntry{zero});
  FgnnStack s;
  s.entries.push_back(StackEntry{std::move(res)});
  const auto out = stack_forward(s, g, feats);
  CHECK(out.node.data == feats.node.data);
  CHECK(out.factor.data == feats.factor.data);
}

TEST_CASE("residual projection reconciles differing dims") {
  const FactorGraph g({{0, 2, {0, 0}}}, {{0, {0}, Tensor({2}, {0, 0})}});
  auto feats = simple_feats(g, 2, 2, 1, 14);
  ResidualEntry res;
  DensePairEntry widen;
  widen.net.append(AffineLayer(2, 3, Activation::identity));  // zero inner
  res.inner.push_back(StackEntry{widen});
  res.node_proj = AffineLayer(2, 3, {1, 0, 0, 1, 1, 1}, {0, 0, 0}, Activation::identity);
  res.factor_proj = AffineLayer(2, 3, {0, 1, 1, 0, 0, 0}, {0, 0, 0}, Activation::identity);
  FgnnStack s;
  s.entries.push_back(StackEntry{std::move(res)});
  const auto out = stack_forward(s, g, feats);
  CHECK(out.node.at(0, 0) == doctest::Approx(feats.node.at(0, 0)));
  CHECK(out.node.at(0, 2) == doctest::Approx(feats.node.at(0, 0) + feats.node.at(0, 1)));
  CHECK(out.factor.at(0, 0) == doctest::Approx(feats.factor.at(0, 1)));
}

TEST_CASE("stack_forward is bit-deterministic") {
  const FactorGraph g({{0, 2, {0, 0}}, {1, 2, {0, 0}}},
                      {{0, {0, 1}, Tensor({2, 2})}, {1, {1}, Tensor({2})}});
  auto feats = simple_feats(g, 2, 2, 2, 21);
  FgnnStack s;
  s.entries.push_back(StackEntry{FgnnLayerEntry{random_layer(2, 2, 2, 3, 2, /*sequential=*/true)}});
  const auto a = stack_forward(s, g, feats);
  const auto b = stack_forward(s, g, feats);
  CHECK(a.node.data == b.node.data);
  CHECK(a.factor.data == b.factor.data);
}

TEST_CASE("stack JSON round-trip preserves the forward pass") {
  const FactorGraph g({{0, 2, {0, 0}}, {1, 2, {0, 0}}},
                      {{0, {0, 1}, Tensor({2, 2})}, {1, {1}, Tensor({2})}});
  auto feats = simple_feats(g, 2, 2, 2, 33);
  FgnnStack s;
  s.entries.push_back(StackEntry{FgnnLayerEntry{random_layer(2, 2, 2, 3, 8, /*sequential=*/true)}});
  ResidualEntry res;
  DensePairEntry fc;
  fc.net.append(AffineLayer(3, 3, Activation::relu));
  SplitMix64 prng(44);
  for (auto& w : fc.net.layers()[0].weights) w = prng.next_uniform(-1, 1);
  res.inner.push_back(StackEntry{std::move(fc)});
  s.entries.push_back(StackEntry{std::move(res)});
  s.readout = AffineLayer(3, 2, {1, 0, 0, 0, 1, 0}, {0, 0}, Activation::identity);

  const auto j = stack_to_json(s);
  CHECK(j.at("format") == "fgnn-params-v1");
  const auto back = stack_from_json(j);
  const auto a = stack_forward(s, g, feats);
  const auto b = stack_forward(back, g, feats);
  CHECK(a.node.data == b.node.data);
  CHECK(a.factor.data == b.factor.data);
}
