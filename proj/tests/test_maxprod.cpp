#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fgnn/maxprod.hpp"
#include "fgnn/oracles.hpp"
#include "fgnn/rng.hpp"

using namespace fgnn;

namespace {

FactorGraph two_var_graph() {
  return FactorGraph({{0, 2, {0.0, 1.0}}, {1, 2, {0.0, 1.0}}},
                     {{0, {0, 1}, Tensor({2, 2}, {0.0, 0.1, 0.2, 1.0})}});
}

// Random binary chain with pairwise factors plus one width-3 factor.
FactorGraph random_mixed_graph(std::uint64_t seed, int n) {
  SplitMix64 rng(seed);
  std::vector<VariableNode> vars;
  for (int i = 0; i < n; ++i)
    vars.push_back({i, 2, {rng.next_uniform(-1.0, 1.0), rng.next_uniform(-1.0, 1.0)}});
  std::vector<FactorNode> factors;
  for (int i = 0; i + 1 < n; ++i) {
    std::vector<double> t(4);
    for (auto& v : t) v = rng.next_uniform(-1.0, 1.0);
    factors.push_back({i, {i, i + 1}, Tensor({2, 2}, std::move(t))});
  }
  const int start = n >= 3 ? static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - 2))) : 0;
  std::vector<double> t(8);
  for (auto& v : t) v = rng.next_uniform(-1.0, 1.0);
  factors.push_back({n, {start, start + 1, start + 2}, Tensor({2, 2, 2}, std::move(t))});
  return FactorGraph(std::move(vars), std::move(factors));
}

double max_belief_diff(const BeliefState& a, const BeliefState& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.node_beliefs.size(); ++i)
    for (std::size_t x = 0; x < a.node_beliefs[i].size(); ++x)
      m = std::max(m, std::fabs(a.node_beliefs[i][x] - b.node_beliefs[i][x]));
  return m;
}

}  // namespace

TEST_CASE("bp_init copies unaries and zeroes messages") {
  const FactorGraph g({{0, 2, {0.2, 0.7}}}, {});
  const auto s = bp_init(g);
  CHECK(s.node_beliefs[0] == std::vector<double>{0.2, 0.7});
  CHECK(s.factor_messages.empty());

  const auto g2 = two_var_graph();
  const auto s2 = bp_init(g2);
  REQUIRE(s2.factor_messages.size() == 1);
  REQUIRE(s2.factor_messages[0].size() == 2);  // one slot per incident edge
  CHECK(s2.factor_messages[0][0] == std::vector<double>{0.0, 0.0});
}

TEST_CASE("factor-free graph is an immediate fixed point") {
  const FactorGraph g({{0, 2, {0.2, 0.7}}, {1, 3, {0.0, -1.0, 0.5}}}, {});
  auto s = bp_init(g);
  for (int it = 0; it < 3; ++it) s = bp_iterate(g, s);
  CHECK(s.node_beliefs[0] == std::vector<double>{0.2, 0.7});
  CHECK(s.node_beliefs[1] == std::vector<double>{0.0, -1.0, 0.5});
}

TEST_CASE("one iteration matches the hand-computed message") {
  const auto g = two_var_graph();
  const auto s1 = bp_iterate(g, bp_init(g));
  // m_{c->0}(x0) = max_{x1} [theta_c(x0,x1) + b1(x1)], b1 = [0,1]
  const double m0_0 = std::max(0.0 + 0.0, 0.1 + 1.0);
  const double m0_1 = std::max(0.2 + 0.0, 1.0 + 1.0);
  CHECK(s1.factor_messages[0][0][0] == doctest::Approx(m0_0));
  CHECK(s1.factor_messages[0][0][1] == doctest::Approx(m0_1));
  CHECK(s1.node_beliefs[0][0] == doctest::Approx(0.0 + m0_0));
  CHECK(s1.node_beliefs[0][1] == doctest::Approx(1.0 + m0_1));
}

TEST_CASE("symmetric potentials keep beliefs symmetric") {
  const FactorGraph g({{0, 2, {0.3, 0.6}}, {1, 2, {0.3, 0.6}}},
                      {{0, {0, 1}, Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0})}});
  auto s = bp_init(g);
  for (int it = 0; it < 4; ++it) {
    s = bp_iterate(g, s);
    CHECK(s.node_beliefs[0] == s.node_beliefs[1]);
  }
}

TEST_CASE("decode argmax with tie to the smallest state") {
  BeliefState s;
  s.node_beliefs = {{0.2, 0.7}, {0.5, 0.5}, {1.0, -2.0, 1.0}};
  const auto a = decode(s);
  CHECK(a.states == std::vector<int>{1, 0, 0});

  // Per-variable constant shifts and positive scaling leave decode unchanged.
  BeliefState shifted = s;
  for (std::size_t i = 0; i < shifted.node_beliefs.size(); ++i)
    for (auto& v : shifted.node_beliefs[i]) v = 3.0 * (v + 10.0 * static_cast<double>(i + 1));
  CHECK(decode(shifted).states == a.states);
}

TEST_CASE("direct and decomposed forms agree to 1e-9") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = random_mixed_graph(seed, 6);
    const auto d = decompose_graph(g);
    auto s_direct = bp_init(g);
    auto s_dec = bp_init_decomposed(g, d);
    for (int it = 0; it < 5; ++it) {
      s_direct = bp_iterate(g, s_direct);
      s_dec = bp_iterate_decomposed(g, d, s_dec);
      CHECK(max_belief_diff(s_direct, s_dec) <= 1e-9);
    }
  }
}

TEST_CASE("decomposed single-variable factor reduces to a table max") {
  const FactorGraph g({{0, 2, {0.1, 0.4}}}, {{0, {0}, Tensor({2}, {2.0, 1.5})}});
  const auto d = decompose_graph(g);
  auto s = bp_iterate_decomposed(g, d, bp_init_decomposed(g, d));
  // Empty cavity sum; belief = theta + max_z table row.
  CHECK(s.node_beliefs[0][0] == doctest::Approx(0.1 + 2.0));
  CHECK(s.node_beliefs[0][1] == doctest::Approx(0.4 + 1.5));
}

TEST_CASE("zero single-variable factor keeps beliefs at theta") {
  const FactorGraph g({{0, 2, {0.1, 0.4}}}, {{0, {0}, Tensor({2}, {0.0, 0.0})}});
  const auto d = decompose_graph(g);
  auto s = bp_init_decomposed(g, d);
  for (int it = 0; it < 3; ++it) s = bp_iterate_decomposed(g, d, s);
  CHECK(s.node_beliefs[0][0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.node_beliefs[0][1] == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("run_max_product with k=0 decodes the unary argmax") {
  const auto g = two_var_graph();
  const auto [state, assignment] = run_max_product(g, 0);
  CHECK(assignment.states == std::vector<int>{1, 1});
}

TEST_CASE("run_max_product modes agree on beliefs and decode") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = random_mixed_graph(100 + seed, 6);
    const auto [sd, ad] = run_max_product(g, 4, BpMode::direct);
    const auto [sz, az] = run_max_product(g, 4, BpMode::decomposed);
    CHECK(max_belief_diff(sd, sz) <= 1e-9);
    CHECK(ad.states == az.states);
  }
}

TEST_CASE("synchronous update is invariant to factor enumeration order") {
  const auto g = random_mixed_graph(17, 6);
  std::vector<FactorNode> reversed(g.factors().rbegin(), g.factors().rend());
  const FactorGraph permuted(g.variables(), std::move(reversed));
  auto s1 = bp_init(g);
  auto s2 = bp_init(permuted);
  for (int it = 0; it < 4; ++it) {
    s1 = bp_iterate(g, s1);
    s2 = bp_iterate(permuted, s2);
  }
  for (int i = 0; i < g.num_variables(); ++i)
    for (int x = 0; x < 2; ++x)
      CHECK(s1.node_beliefs[static_cast<std::size_t>(i)][static_cast<std::size_t>(x)] ==
            doctest::Approx(s2.node_beliefs[static_cast<std::size_t>(i)][static_cast<std::size_t>(x)])
                .epsilon(1e-12));
}

TEST_CASE("cavity toggle differs from the verbatim form but stays finite") {
  const auto g = random_mixed_graph(23, 6);
  const auto [sv, av] = run_max_product(g, 4, BpMode::direct, false);
  const auto [sc, ac] = run_max_product(g, 4, BpMode::direct, true);
  for (const auto& b : sc.node_beliefs)
    for (double v : b) CHECK(std::isfinite(v));
  CHECK(max_belief_diff(sv, sc) > 0.0);  // k>1 separates the two forms here
  CHECK_THROWS_AS(run_max_product(g, 2, BpMode::decomposed, true), std::invalid_argument);
}

TEST_CASE("cavity form is exact on trees") {
  // On a pairwise tree the cavity form converges to the true MAP argmax.
  for (std::uint64_t seed = 200; seed < 205; ++seed) {
    SplitMix64 rng(seed);
    std::vector<VariableNode> vars;
    for (int i = 0; i < 7; ++i)
      vars.push_back({i, 2, {rng.next_uniform(-1.0, 1.0), rng.next_uniform(-1.0, 1.0)}});
    std::vector<FactorNode> factors;
    for (int i = 0; i + 1 < 7; ++i) {
      std::vector<double> t(4);
      for (auto& v : t) v = rng.next_uniform(-1.0, 1.0);
      factors.push_back({i, {i, i + 1}, Tensor({2, 2}, std::move(t))});
    }
    const FactorGraph g(std::move(vars), std::move(factors));
    const auto [state, assignment] = run_max_product(g, 10, BpMode::direct, true);
    const auto exact = brute_force_map(g);
    CHECK(score(g, assignment) == doctest::Approx(exact.score).epsilon(1e-9));
  }
}

TEST_CASE("mini-dataset style graphs: max-product lands below oracle quality") {
  // Fixed pairwise table strongly favoring (1,1) with tight budgets; the
  // verbatim belief update double-counts it, so agreement with the exact MAP
  // is mediocre. This mirrors the reported gap to learned models.
  SplitMix64 rng(31);
  double agree = 0.0;
  int total = 0;
  for (int inst = 0; inst < 20; ++inst) {
    std::vector<VariableNode> vars;
    for (int i = 0; i < 14; ++i)
      vars.push_back({i, 2, {rng.next_unit(), rng.next_unit()}});
    std::vector<FactorNode> factors;
    for (int i = 0; i + 1 < 14; ++i)
      factors.push_back({i, {i, i + 1}, Tensor({2, 2}, {0.0, 0.1, 0.2, 1.0})});
    for (int s = 0; s + 4 <= 14; ++s) {
      std::vector<double> t(16, 0.0);
      for (std::uint32_t c = 0; c < 16; ++c) {
        int ones = 0;
        for (std::uint32_t b = c; b; b &= b - 1) ++ones;
        if (ones > 2) t[c] = kHardPenalty;
      }
      factors.push_back({100 + s, {s, s + 1, s + 2, s + 3}, Tensor({2, 2, 2, 2}, std::move(t))});
    }
    const FactorGraph g(std::move(vars), std::move(factors));
    const auto label = window_dp_map(g, 4).assignment;
    const auto pred = run_max_product(g, 8).second;
    for (int i = 0; i < 14; ++i) {
      agree += pred.states[static_cast<std::size_t>(i)] == label.states[static_cast<std::size_t>(i)];
      ++total;
    }
  }
  const double rate = agree / total;
  CHECK(rate > 0.2);
  CHECK(rate < 0.95);
}
