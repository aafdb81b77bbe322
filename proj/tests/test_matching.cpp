#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fgnn/matching.hpp"
#include "fgnn/rng.hpp"

using namespace fgnn;

namespace {

// Chain of L variables with one window factor per start position, so factor
// count equals variable count and h(i) = c_i is a perfect matching.
FactorGraph window_chain(int n, int window) {
  std::vector<VariableNode> vars;
  for (int i = 0; i < n; ++i) vars.push_back({i, 2, {0.0, 0.0}});
  std::vector<FactorNode> factors;
  for (int i = 0; i < n; ++i) {
    std::vector<int> scope;
    for (int j = i; j < std::min(n, i + window); ++j) scope.push_back(j);
    factors.push_back({i, scope, Tensor(std::vector<int>(scope.size(), 2))});
  }
  return FactorGraph(std::move(vars), std::move(factors));
}

FeatureSet random_feats(const FactorGraph& g, int f_dim, int g_dim, int t_dim, std::uint64_t seed) {
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

FgnnLayerParams random_params(int g_dim, int f_dim, int t_dim, int width, std::uint64_t seed) {
  SplitMix64 prng(seed);
  FgnnLayerParams p;
  p.vf_m.append(AffineLayer(g_dim + f_dim, width, Activation::relu));
  p.vf_m.append(AffineLayer(width, width, Activation::identity));
  p.vf_q.append(AffineLayer(t_dim, width * width, Activation::identity));
  p.vf_rows = width;
  p.vf_cols = width;
  p.fv_m.append(AffineLayer(g_dim + f_dim, width, Activation::relu));
  p.fv_m.append(AffineLayer(width, width, Activation::identity));
  p.fv_q.append(AffineLayer(t_dim, width * width, Activation::identity));
  p.fv_rows = width;
  p.fv_cols = width;
  for (auto* net : {&p.vf_m, &p.vf_q, &p.fv_m, &p.fv_q})
    for (auto& l : net->layers()) {
      for (auto& w : l.weights) w = prng.next_uniform(-1.0, 1.0);
      for (auto& b : l.bias) b = prng.next_uniform(-0.5, 0.5);
    }
  return p;
}

double max_abs_diff(const FeatureMatrix& a, const FeatureMatrix& b) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("one containing factor per variable yields the identity-like matching") {
  const auto g = window_chain(5, 3);
  const auto h = find_perfect_matching(g);
  REQUIRE(h.has_value());
  for (int i = 0; i < 5; ++i) {
    const int c = h->var_to_factor[static_cast<std::size_t>(i)];
    CHECK(h->factor_to_var[static_cast<std::size_t>(c)] == i);
    bool contains = false;
    for (int id : g.factors()[static_cast<std::size_t>(c)].scope) contains |= id == i;
    CHECK(contains);
  }
}

TEST_CASE("two variables and one factor cannot match perfectly") {
  const FactorGraph g({{0, 2, {0, 0}}, {1, 2, {0, 0}}}, {{0, {0, 1}, Tensor({2, 2})}});
  CHECK(!find_perfect_matching(g).has_value());
}

TEST_CASE("matching requires an augmenting-path search, not greedy choice") {
  // Factor 0 touches both vars, factor 1 only var 0: the only perfect
  // matching is h(0)=1, h(1)=0.
  const FactorGraph g({{0, 2, {0, 0}}, {1, 2, {0, 0}}},
                      {{0, {0, 1}, Tensor({2, 2})}, {1, {0}, Tensor({2})}});
  const auto h = find_perfect_matching(g);
  REQUIRE(h.has_value());
  CHECK(h->var_to_factor == std::vector<int>{1, 0});
}

TEST_CASE("mpnn transform equals the FGNN layer on a window chain") {
  const auto g = window_chain(6, 3);
  const auto h = find_perfect_matching(g);
  REQUIRE(h.has_value());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_params(2, 3, 2, 4, 1000 + seed);
    const auto feats = random_feats(g, 3, 2, 2, 2000 + seed);
    const auto transform = mpnn_transform(g, *h, p);
    const auto [got_factor, got_node] = transform.forward(feats);
    const auto want_factor = vf_layer(g, feats, p);
    const auto want_node = fv_layer(g, feats, p);
    CHECK(max_abs_diff(got_factor, want_factor) <= 1e-9);
    CHECK(max_abs_diff(got_node, want_node) <= 1e-9);
  }
}

TEST_CASE("mpnn transform equals the FGNN layer on a 3x3 toy with matching") {
  // Three variables, three factors: f0 = {0,1}, f1 = {1,2}, f2 = {0,2}.
  const FactorGraph g({{0, 2, {0, 0}}, {1, 2, {0, 0}}, {2, 2, {0, 0}}},
                      {{0, {0, 1}, Tensor({2, 2})},
                       {1, {1, 2}, Tensor({2, 2})},
                       {2, {0, 2}, Tensor({2, 2})}});
  const auto h = find_perfect_matching(g);
  REQUIRE(h.has_value());
  const auto p = random_params(2, 2, 3, 5, 77);
  const auto feats = random_feats(g, 2, 2, 3, 78);
  const auto [got_factor, got_node] = mpnn_transform(g, *h, p).forward(feats);
  CHECK(max_abs_diff(got_factor, vf_layer(g, feats, p)) <= 1e-9);
  CHECK(max_abs_diff(got_node, fv_layer(g, feats, p)) <= 1e-9);
}

TEST_CASE("invalid matchings are rejected") {
  const auto g = window_chain(4, 2);
  const auto p = random_params(2, 2, 2, 3, 5);

  Matching missing;  // too short: misses a variable
  missing.var_to_factor = {0, 1, 2};
  missing.factor_to_var = {0, 1, 2};
  CHECK_THROWS_AS(mpnn_transform(g, missing, p), StructureError);

  Matching not_incident;  // bijection, but h(3)=0 while 3 is not in scope(f0)
  not_incident.var_to_factor = {1, 2, 3, 0};
  not_incident.factor_to_var = {3, 0, 1, 2};
  CHECK_THROWS_AS(mpnn_transform(g, not_incident, p), StructureError);
}
