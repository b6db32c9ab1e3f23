#include <doctest.h>

#include <cmath>

#include "conformer/errors.hpp"
#include "conformer/graph.hpp"
#include "test_support.hpp"

using namespace conformer;
using conformer::testing::check_gradient;
using conformer::testing::random_tensor;
using conformer::testing::weighted_sum;

namespace {

GraphSpec random_graph(std::size_t n, Rng& rng, double density = 0.4) {
  GraphSpec g{n, {}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (rng.bernoulli(density)) g.edges.push_back({i, j, rng.uniform(0.1, 3.0)});
  return g;
}

// Dense oracle: hop block j is L^j x with L^j from repeated dense products.
Tensor dense_propagate(const Tensor& x, const Tensor& l, int k) {
  const std::size_t t_len = x.dim(0), n = x.dim(1), d = x.dim(2);
  std::vector<Tensor> blocks;
  Tensor power({n, n});
  for (std::size_t i = 0; i < n; ++i) power.at(i, i) = 1.0;
  for (int hop = 0; hop <= k; ++hop) {
    Tensor block({t_len, n, d});
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += power.at(i, j) * x.at(t, j, c);
          block.at(t, i, c) = s;
        }
    blocks.push_back(block);
    power = matmul(l, power);
  }
  return concat_last_axis(blocks);
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("graph validation") {
    CHECK_THROWS_AS((GraphSpec{2, {{0, 2, 1.0}}}.validate()), ValidationError);
    CHECK_THROWS_AS((GraphSpec{2, {{0, 1, -1.0}}}.validate()), ValidationError);
    CHECK_THROWS_AS((GraphSpec{2, {{0, 1, 1.0}, {0, 1, 2.0}}}.validate()), ValidationError);
    CHECK_THROWS_AS(normalize_adjacency(GraphSpec{2, {{0, 1, -0.5}}}, false), ValidationError);
    CHECK_NOTHROW((GraphSpec{2, {{0, 1, 0.0}}}.validate()));
  }

  TEST_CASE("self-loops only gives the identity") {
    const auto l = normalize_adjacency(GraphSpec{3, {{0, 0, 2.0}, {1, 1, 1.0}, {2, 2, 5.0}}}, false).dense();
    CHECK(l == Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    CHECK(normalize_adjacency(GraphSpec{3, {}}, true).dense() == l);
  }

  TEST_CASE("two-node swap and weighted chain rows") {
    const auto swap = normalize_adjacency(GraphSpec{2, {{0, 1, 1.0}, {1, 0, 1.0}}}, false).dense();
    CHECK(swap == Tensor::from({2, 2}, {0, 1, 1, 0}));
    const auto chain = normalize_adjacency(GraphSpec{3, {{0, 1, 2.0}, {0, 2, 1.0}, {1, 2, 1.0}}}, false).dense();
    CHECK(chain.at(0, 0) == 0.0);
    CHECK(chain.at(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(chain.at(0, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    // Node 2 has no outgoing edges and no self-loop: its row is empty.
    for (std::size_t j = 0; j < 3; ++j) CHECK(chain.at(2, j) == 0.0);
  }

  TEST_CASE("rows are stochastic with entries in [0, 1]") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
      const auto g = random_graph(1 + rng.below(10), rng);
      const auto l = normalize_adjacency(g, true).dense();
      for (std::size_t i = 0; i < g.n_nodes; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.n_nodes; ++j) {
          CHECK(l.at(i, j) >= 0.0);
          CHECK(l.at(i, j) <= 1.0);
          s += l.at(i, j);
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
      }
    }
  }

  TEST_CASE("propagate edge cases") {
    Rng rng(32);
    const Tensor x = random_tensor({2, 3, 2}, rng);
    const auto op = normalize_adjacency(random_graph(3, rng), true);
    CHECK(propagate(x, op, 0) == x);
    CHECK_THROWS_AS(propagate(x, op, -1), ContractError);
    CHECK(propagate(x, op, 3).shape() == Shape{2, 3, 8});

    const auto empty = normalize_adjacency(GraphSpec{3, {}}, false);
    const Tensor out = propagate(x, empty, 2);
    CHECK(slice_last_axis(out, 0, 2) == x);
    CHECK(slice_last_axis(out, 2, 2) == Tensor({2, 3, 2}));
    CHECK(slice_last_axis(out, 4, 2) == Tensor({2, 3, 2}));
  }

  TEST_CASE("propagate matches dense matrix powers") {
    Rng rng(33);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng.below(10);
      const int k = static_cast<int>(rng.below(5));
      const auto g = random_graph(n, rng);
      const auto op = normalize_adjacency(g, rng.bernoulli(0.5));
      const Tensor x = random_tensor({1 + rng.below(3), n, 1 + rng.below(3)}, rng, -10, 10);
      CHECK(max_abs_diff(propagate(x, op, k), dense_propagate(x, op.dense(), k)) <= 1e-12);
    }
  }

  TEST_CASE("constant features stay constant under stochastic rows") {
    Rng rng(34);
    const auto op = normalize_adjacency(random_graph(6, rng), true);
    Tensor x({2, 6, 3});
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 3; ++c) x.at(t, i, c) = 1.5 + static_cast<double>(c);
    const Tensor out = propagate(x, op, 3);
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 12; ++c) CHECK(std::abs(out.at(t, i, c) - (1.5 + static_cast<double>(c % 3))) <= 1e-12);
  }

  TEST_CASE("differentiable propagation matches finite differences") {
    Rng rng(35);
    const auto op = normalize_adjacency(random_graph(4, rng), true);
    const auto r = check_gradient([&](auto v) { return weighted_sum(propagate(v[0], op, 2)); },
                                  {random_tensor({2, 4, 3}, rng)});
    CHECK(r.max_rel <= 1e-4);
    Tape tape(false);
    const Tensor x = random_tensor({2, 4, 3}, rng);
    CHECK(propagate(tape.leaf(x), op, 2).value() == propagate(x, op, 2));
  }
}
