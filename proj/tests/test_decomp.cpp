#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fgnn/decomp.hpp"
#include "fgnn/rng.hpp"

using namespace fgnn;

namespace {

// Random factor with log-potentials shifted into [1, 4].
FactorNode random_factor(std::uint64_t seed, const std::vector<int>& cards) {
  SplitMix64 rng(seed);
  Tensor t(cards);
  for (auto& v : t.values()) v = rng.next_uniform(1.0, 4.0);
  return {0, [&] {
            std::vector<int> scope(cards.size());
            for (std::size_t i = 0; i < cards.size(); ++i) scope[i] = static_cast<int>(i);
            return scope;
          }(),
          std::move(t)};
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("reconstruct inverts decompose_factor on 200 random factors") {
  SplitMix64 pick(42);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::vector<int> cards(1 + pick.next_below(3));  // 1..3 variables
    for (auto& c : cards) c = 2 + static_cast<int>(pick.next_below(2));  // 2..3 states
    const auto f = random_factor(seed, cards);
    const auto d = decompose_factor(f);
    CHECK(d.z_cardinality == static_cast<int>(f.log_potential.size()));
    CHECK(max_abs_diff(reconstruct(d), f.log_potential) <= 1e-9);
  }
}

TEST_CASE("the matching configuration is the maximizing z") {
  const auto f = random_factor(9, {2, 3, 2});
  const auto d = decompose_factor(f);
  for (int z = 0; z < d.z_cardinality; ++z) {
    const auto idx = unravel_index(f.log_potential.shape(), z);
    // Score each candidate z' for this configuration; the matching z must win.
    double best = -1e300;
    int best_z = -1;
    for (int zc = 0; zc < d.z_cardinality; ++zc) {
      double s = 0.0;
      for (std::size_t slot = 0; slot < idx.size(); ++slot)
        s += d.tables[slot][static_cast<std::int64_t>(idx[slot]) * d.z_cardinality + zc];
      if (s > best) {
        best = s;
        best_z = zc;
      }
    }
    CHECK(best_z == z);
  }
}

TEST_CASE("unary factor decomposes diag-like") {
  const FactorNode f{0, {0}, Tensor({3}, {1.5, 2.0, 3.5})};
  const auto d = decompose_factor(f);
  REQUIRE(d.tables.size() == 1);
  for (int x = 0; x < 3; ++x)
    for (int z = 0; z < 3; ++z) {
      const double v = d.tables[0][static_cast<std::int64_t>(x) * 3 + z];
      if (x == z)
        CHECK(v == f.log_potential[z]);
      else
        CHECK(v == -d.penalty);
    }
}

TEST_CASE("constant factor reconstructs to the constant") {
  Tensor t({2, 2, 2});
  for (auto& v : t.values()) v = 2.0;
  const FactorNode f{0, {0, 1, 2}, std::move(t)};
  const auto r = reconstruct(decompose_factor(f));
  for (std::int64_t i = 0; i < r.size(); ++i) CHECK(r[i] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("precondition: entries below 1 are rejected, _any handles them") {
  const FactorNode f{0, {0, 1}, Tensor({2, 2}, {0.5, 1.2, 3.0, 2.0})};
  CHECK_THROWS_AS(decompose_factor(f), std::domain_error);

  const auto d = decompose_factor_any(f);
  CHECK(d.offset == doctest::Approx(0.5));
  CHECK(max_abs_diff(reconstruct(d), f.log_potential) <= 1e-9);

  const FactorNode neg{0, {0, 1}, Tensor({2, 2}, {-3.0, 0.0, 2.0, -1.0})};
  CHECK(max_abs_diff(reconstruct(decompose_factor_any(neg)), neg.log_potential) <= 1e-9);
}

TEST_CASE("reconstruct of hand-built tables") {
  SUBCASE("all-zero tables give the zero tensor") {
    DecomposedFactor d;
    d.scope_cardinalities = {2, 2};
    d.z_cardinality = 4;
    d.tables = {Tensor({2, 4}), Tensor({2, 4})};
    const auto r = reconstruct(d);
    for (std::int64_t i = 0; i < r.size(); ++i) CHECK(r[i] == 0.0);
  }
  SUBCASE("single z is the rank-1 sum of the columns") {
    DecomposedFactor d;
    d.scope_cardinalities = {2, 3};
    d.z_cardinality = 1;
    d.tables = {Tensor({2, 1}, {1.0, 2.0}), Tensor({3, 1}, {10.0, 20.0, 30.0})};
    const auto r = reconstruct(d);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 3; ++b)
        CHECK(r.at({a, b}) == doctest::Approx((a + 1) + 10.0 * (b + 1)));
  }
}

TEST_CASE("decompose_graph covers every factor in order") {
  const FactorGraph g({{0, 2, {0, 0}}, {1, 2, {0, 0}}, {2, 2, {0, 0}}},
                      {{7, {0, 1}, Tensor({2, 2}, {-1, 0, 0, 1})},
                       {8, {1, 2}, Tensor({2, 2}, {2, 3, 4, 5})}});
  const auto ds = decompose_graph(g);
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].factor_id == 7);
  CHECK(ds[1].factor_id == 8);
  for (std::size_t i = 0; i < ds.size(); ++i)
    CHECK(max_abs_diff(reconstruct(ds[i]), g.factors()[i].log_potential) <= 1e-9);
}
