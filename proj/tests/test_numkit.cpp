#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "fgnn/densenet.hpp"
#include "fgnn/rng.hpp"
#include "fgnn/tensor.hpp"

using namespace fgnn;

TEST_CASE("tensor_at row-major examples") {
  Tensor pw({2, 2}, {0.0, 0.1, 0.2, 1.0});
  CHECK(pw.at({1, 1}) == 1.0);
  CHECK(pw.at({0, 1}) == 0.1);

  Tensor v({3}, {5, 6, 7});
  CHECK(v.at({0}) == 5.0);

  Tensor m({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(m.at({1, 2}) == 5.0);
}

TEST_CASE("tensor_at bounds and shape validation") {
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(t.at({2, 0}), std::out_of_range);
  CHECK_THROWS_AS(t.at({0, -1}), std::out_of_range);
  CHECK_THROWS_AS(t.at({0}), std::out_of_range);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(Tensor({0}, {}), ShapeError);
}

TEST_CASE("tensor_at equals flat row-major offset exhaustively") {
  // Independent odometer enumeration doubles as the offset oracle.
  for (const auto& shape : std::vector<std::vector<int>>{{4}, {2, 3}, {3, 2, 2}, {2, 2, 2, 2}}) {
    const auto n = shape_product(shape);
    std::vector<double> vals(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) vals[static_cast<std::size_t>(i)] = static_cast<double>(i);
    Tensor t(shape, vals);
    std::vector<int> idx(shape.size(), 0);
    for (std::int64_t flat = 0; flat < n; ++flat) {
      CHECK(t.at(std::span<const int>(idx.data(), idx.size())) == static_cast<double>(flat));
      CHECK(unravel_index(shape, flat) == idx);
      for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
        if (++idx[static_cast<std::size_t>(d)] < shape[static_cast<std::size_t>(d)]) break;
        idx[static_cast<std::size_t>(d)] = 0;
      }
    }
  }
}

TEST_CASE("net_forward identity and relu examples") {
  DenseNet id;
  id.append(AffineLayer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::identity));
  CHECK(id.forward(std::vector<double>{1, 2}) == std::vector<double>{1, 2});

  DenseNet relu1;
  relu1.append(AffineLayer(2, 1, {1, -1}, {0}, Activation::relu));
  CHECK(relu1.forward(std::vector<double>{3, 5}) == std::vector<double>{0});

  CHECK_THROWS_AS(relu1.forward(std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("pairwise-max gadget is exact") {
  // relu(x1-x2) + relu(x2) - relu(-x2) over two layers.
  DenseNet g;
  g.append(AffineLayer(2, 3, {1, -1, 0, 1, 0, -1}, {0, 0, 0}, Activation::relu));
  g.append(AffineLayer(3, 1, {1, 1, -1}, {0}, Activation::identity));
  CHECK(g.forward(std::vector<double>{3, 5})[0] == 5.0);
  CHECK(g.forward(std::vector<double>{5, 3})[0] == 5.0);
  CHECK(g.forward(std::vector<double>{-7, -2})[0] == -2.0);
  CHECK(g.forward(std::vector<double>{0, 0})[0] == 0.0);

  // Exact on integer-valued doubles below 2^52: the subtraction a-b is then
  // representable, so no rounding enters the composition.
  SplitMix64 rng(17);
  for (int it = 0; it < 2000; ++it) {
    const double a = static_cast<double>(static_cast<std::int64_t>(rng.next_below(1ull << 52)) -
                                         (1ll << 51));
    const double b = static_cast<double>(static_cast<std::int64_t>(rng.next_below(1ull << 52)) -
                                         (1ll << 51));
    CHECK(g.forward(std::vector<double>{a, b})[0] == std::max(a, b));
  }

  // Real-valued inputs can double-round when a-b lands in a wider binade;
  // the result stays within 2 ulp of the true max.
  for (int it = 0; it < 2000; ++it) {
    const double a = rng.next_uniform(-100.0, 100.0);
    const double b = rng.next_uniform(-100.0, 100.0);
    const double got = g.forward(std::vector<double>{a, b})[0];
    const double want = std::max(a, b);
    CHECK(std::fabs(got - want) <= 2.0 * (std::fabs(a) + std::fabs(b)) * 0x1.0p-52);
  }
}

TEST_CASE("layer dimension chaining is validated") {
  DenseNet n;
  n.append(AffineLayer(2, 3, Activation::relu));
  CHECK_THROWS_AS(n.append(AffineLayer(2, 1, Activation::identity)), ShapeError);
}
