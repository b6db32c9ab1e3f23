#include <doctest.h>

#include <cmath>

#include "conformer/errors.hpp"
#include "conformer/tensor.hpp"
#include "test_support.hpp"

using namespace conformer;
using conformer::testing::random_tensor;

TEST_SUITE("tensor") {
  TEST_CASE("construction checks shape against data") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
    const Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t[5] == 1.5);
  }

  TEST_CASE("matmul identity, hand product and zero annihilator") {
    const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(eye, m) == m);
    CHECK(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})) == Tensor::from({1, 1}, {11}));
    Rng rng(1);
    const Tensor a = random_tensor({3, 4}, rng);
    CHECK(matmul(a, Tensor({4, 5})) == Tensor({3, 5}));
  }

  TEST_CASE("matmul mismatch names both shapes") {
    try {
      (void)matmul(Tensor({2, 3}), Tensor({4, 2}));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("(2, 3)") != std::string::npos);
      CHECK(msg.find("(4, 2)") != std::string::npos);
    }
  }

  TEST_CASE("matmul batches broadcast against a shared right operand") {
    Rng rng(2);
    const Tensor a = random_tensor({3, 2, 4}, rng);
    const Tensor b = random_tensor({4, 5}, rng);
    const Tensor c = matmul(a, b);
    REQUIRE(c.shape() == Shape{3, 2, 5});
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
          double ref = 0.0;
          for (std::size_t k = 0; k < 4; ++k) ref += a.at(s, i, k) * b.at(k, j);
          CHECK(c.at(s, i, j) == doctest::Approx(ref).epsilon(1e-14));
        }
  }

  TEST_CASE("softmax hand values, normalization and shift invariance") {
    const Tensor half = softmax_last_axis(Tensor::from({2}, {0, 0}));
    CHECK(half[0] == 0.5);
    CHECK(half[1] == 0.5);
    const Tensor q = softmax_last_axis(Tensor::from({2}, {0, std::log(3.0)}));
    CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-14));

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor x = random_tensor({4, 7}, rng, -10, 10);
      const Tensor p = softmax_last_axis(x);
      for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 7; ++j) {
          CHECK(p.at(r, j) >= 0.0);
          s += p.at(r, j);
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
      }
      Tensor shifted = x;
      for (std::size_t r = 0; r < 4; ++r) {
        const double c = rng.uniform(-50, 50);
        for (std::size_t j = 0; j < 7; ++j) shifted.at(r, j) += c;
      }
      CHECK(max_abs_diff(softmax_last_axis(shifted), p) <= 1e-12);
    }
    // Large logits stay finite thanks to max subtraction.
    CHECK(softmax_last_axis(Tensor::from({2}, {1000, 1000}))[0] == 0.5);
  }

  TEST_CASE("mean and std over the last axis") {
    const MeanStd ms = mean_std_last_axis(Tensor::from({4}, {1, 2, 3, 4}), 1e-300);
    CHECK(ms.mean[0] == 2.5);
    CHECK(ms.std[0] == doctest::Approx(std::sqrt(1.25)).epsilon(1e-14));
    const MeanStd c = mean_std_last_axis(Tensor::from({3}, {7, 7, 7}), 1e-5);
    CHECK(c.std[0] == doctest::Approx(std::sqrt(1e-5)).epsilon(1e-12));
    const MeanStd one = mean_std_last_axis(Tensor::from({1}, {4.5}), 1e-5);
    CHECK(one.mean[0] == 4.5);
    CHECK(one.std[0] == doctest::Approx(std::sqrt(1e-5)).epsilon(1e-12));
    CHECK_THROWS_AS(mean_std_last_axis(Tensor({3}), 0.0), ContractError);
  }

  TEST_CASE("concat and slice round trip") {
    Rng rng(4);
    const Tensor a = random_tensor({2, 3}, rng);
    const Tensor b = random_tensor({2, 5}, rng);
    const std::vector<Tensor> single{a};
    CHECK(concat_last_axis(single) == a);
    const std::vector<Tensor> parts{a, b};
    const Tensor c = concat_last_axis(parts);
    CHECK(c.shape() == Shape{2, 8});
    CHECK(slice_last_axis(c, 0, 3) == a);
    CHECK(slice_last_axis(c, 3, 5) == b);
    const std::vector<Tensor> bad{a, Tensor({3, 2})};
    CHECK_THROWS_AS(concat_last_axis(bad), DimensionError);
  }

  TEST_CASE("swap_leading_axes is an involution") {
    Rng rng(5);
    const Tensor x = random_tensor({3, 4, 2}, rng);
    const Tensor y = swap_leading_axes(x);
    CHECK(y.shape() == Shape{4, 3, 2});
    CHECK(y.at(2, 1, 1) == x.at(1, 2, 1));
    CHECK(swap_leading_axes(y) == x);
  }

  TEST_CASE("ops are bitwise deterministic") {
    Rng rng(6);
    const Tensor a = random_tensor({5, 6}, rng);
    const Tensor b = random_tensor({6, 7}, rng);
    CHECK(matmul(a, b) == matmul(a, b));
    CHECK(softmax_last_axis(a) == softmax_last_axis(a));
  }
}
