#include <doctest.h>

#include "conformer/embeddings.hpp"
#include "conformer/errors.hpp"
#include "test_support.hpp"

using namespace conformer;
using conformer::testing::random_tensor;

namespace {

struct Fixture {
  EmbeddingShape shape;
  ParamSet params;
  EmbeddingTables tables;
  CalendarIndexer cal;

  explicit Fixture(std::uint64_t seed = 1) {
    shape.window = 3;
    shape.n_nodes = 2;
    shape.input_dim = 1;
    shape.d_model = 6;
    shape.steps_per_day = 4;
    shape.acc_vocab = 3;
    shape.reg_vocab = 2;
    shape.dims = {2, 3, 1, 2, 2, 4};
    Rng rng(seed);
    tables = EmbeddingTables::create(params, shape, rng);
    cal = CalendarIndexer{4, 0, 0};
  }
};

}  // namespace

TEST_SUITE("embeddings") {
  TEST_CASE("steps per day from the sampling interval") {
    CHECK(CalendarIndexer::from_interval(5).steps_per_day == 288);
    CHECK(CalendarIndexer::from_interval(10).steps_per_day == 144);
    CHECK_THROWS_AS(CalendarIndexer::from_interval(7), ConfigError);
    CHECK_THROWS_AS(CalendarIndexer::from_interval(0), ConfigError);
    CHECK_THROWS_AS(CalendarIndexer::from_interval(5, 7), ConfigError);
    CHECK_THROWS_AS(CalendarIndexer::from_interval(5, 0, 288), ConfigError);
  }

  TEST_CASE("time index wraps the day and week") {
    const CalendarIndexer cal = CalendarIndexer::from_interval(5, 2, 287);
    CHECK(index_time(0, cal) == TimeIndex{2, 287});
    CHECK(index_time(1, cal) == TimeIndex{3, 0});
    const CalendarIndexer sunday = CalendarIndexer::from_interval(60, 6, 23);
    CHECK(index_time(1, sunday) == TimeIndex{0, 0});
    CHECK(index_time(24 * 7, CalendarIndexer::from_interval(60)) == TimeIndex{0, 0});
  }

  TEST_CASE("block layout follows the fixed concatenation order") {
    Fixture f;
    Tape tape(false);
    const auto bound = f.params.bind(tape);
    const Tensor x = Tensor::from({3, 2, 1}, {0.5, -1, 2, 0.25, 1, 0});
    const std::vector<int> acc{0, 1, 2, 0, 1, 0};
    const std::vector<int> reg{1, 0, 0, 1, 0, 0};
    const std::int64_t t0 = 5;  // day 1, slot 1
    const Tensor blocks = embedding_blocks(bound, f.tables, f.cal, {x, acc, reg, t0}).value();
    REQUIRE(blocks.shape() == Shape{3, 2, f.shape.dims.total()});

    const Tensor& w = f.params.value(f.tables.data_proj.weight);
    const Tensor& b = f.params.value(f.tables.data_proj.bias);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t n = 0; n < 2; ++n) {
        const std::size_t cell = t * 2 + n;
        const TimeIndex ti = index_time(t0 + static_cast<std::int64_t>(t), f.cal);
        std::vector<double> expect;
        for (std::size_t j = 0; j < 2; ++j) expect.push_back(x[cell] * w.at(0, j) + b[j]);
        for (std::size_t j = 0; j < 3; ++j) expect.push_back(f.params.value(f.tables.acc).at(acc[cell], j));
        expect.push_back(f.params.value(f.tables.reg).at(reg[cell], 0));
        for (std::size_t j = 0; j < 2; ++j) expect.push_back(f.params.value(f.tables.dow).at(ti.dow, j));
        for (std::size_t j = 0; j < 2; ++j) expect.push_back(f.params.value(f.tables.tod).at(ti.tod, j));
        for (std::size_t j = 0; j < 4; ++j) expect.push_back(f.params.value(f.tables.adaptive).at(t, n, j));
        for (std::size_t j = 0; j < expect.size(); ++j) CHECK(blocks.at(t, n, j) == expect[j]);
      }
  }

  TEST_CASE("fused width and permutation sensitivity") {
    Fixture f;
    Tape tape(false);
    const auto bound = f.params.bind(tape);
    const Tensor x({3, 2, 1}, 0.3);
    const std::vector<int> ids(6, 1);
    const std::vector<int> reg(6, 0);
    const Var fused = embed_all(bound, f.tables, f.cal, {x, ids, reg, 0});
    CHECK(fused.shape() == Shape{3, 2, 6});

    // Swapping two blocks before the fuse layer changes the result.
    const Tensor blocks = embedding_blocks(bound, f.tables, f.cal, {x, ids, reg, 0}).value();
    Tensor swapped = blocks;
    for (std::size_t r = 0; r < blocks.rows(); ++r)
      for (std::size_t j = 0; j < 2; ++j) std::swap(swapped[r * 14 + j], swapped[r * 14 + 10 + j]);
    Tape t2(false);
    const Var fw = t2.leaf(f.params.value(f.tables.fuse.weight));
    const Var fb = t2.leaf(f.params.value(f.tables.fuse.bias));
    CHECK(linear(t2.leaf(blocks), fw, fb).value() == fused.value());
    CHECK(linear(t2.leaf(swapped), fw, fb).value() != fused.value());
  }

  TEST_CASE("zero accident row contributes a zero block") {
    Fixture f;
    f.params.value(f.tables.acc) = Tensor({3, 3});
    Tape tape(false);
    const auto bound = f.params.bind(tape);
    const std::vector<int> zeros(6, 0);
    const Tensor blocks = embedding_blocks(bound, f.tables, f.cal, {Tensor({3, 2, 1}), zeros, zeros, 0}).value();
    for (std::size_t r = 0; r < blocks.rows(); ++r)
      for (std::size_t j = 2; j < 5; ++j) CHECK(blocks[r * 14 + j] == 0.0);
  }

  TEST_CASE("same slot one day apart shares tod, not dow") {
    Fixture f;
    Tape tape(false);
    const auto bound = f.params.bind(tape);
    const std::vector<int> zeros(6, 0);
    const Tensor a = embedding_blocks(bound, f.tables, f.cal, {Tensor({3, 2, 1}), zeros, zeros, 1}).value();
    const Tensor b = embedding_blocks(bound, f.tables, f.cal, {Tensor({3, 2, 1}), zeros, zeros, 5}).value();
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(a[6 + j] != b[6 + j]);  // dow block
      CHECK(a[8 + j] == b[8 + j]);  // tod block
    }
  }

  TEST_CASE("out-of-vocabulary ids name the cell") {
    Fixture f;
    Tape tape(false);
    const auto bound = f.params.bind(tape);
    std::vector<int> acc(6, 0);
    const std::vector<int> reg(6, 0);
    acc[3] = 7;
    try {
      (void)embedding_blocks(bound, f.tables, f.cal, {Tensor({3, 2, 1}), acc, reg, 10});
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("t=11") != std::string::npos);
      CHECK(msg.find("n=1") != std::string::npos);
      CHECK(msg.find("7") != std::string::npos);
    }
    CHECK_THROWS_AS(embedding_blocks(bound, f.tables, f.cal, {Tensor({2, 2, 1}), acc, reg, 0}), DimensionError);
  }

  TEST_CASE("gradients reach every table; unused rows stay zero") {
    Fixture f;
    Tape tape;
    const auto bound = f.params.bind(tape);
    const std::vector<int> acc{0, 1, 0, 1, 0, 1};
    const std::vector<int> reg(6, 0);
    Rng rng(5);
    const Var loss = testing::weighted_sum(embed_all(bound, f.tables, f.cal, {random_tensor({3, 2, 1}, rng), acc, reg, 0}));
    const GradientRecord g = backward(loss, bound);
    const Tensor& acc_grad = g[f.tables.acc];
    for (std::size_t j = 0; j < 3; ++j) CHECK(acc_grad.at(2, j) == 0.0);
    CHECK(max_abs_diff(g[f.tables.adaptive], Tensor(g[f.tables.adaptive].shape())) > 0.0);

    const auto r = testing::check_gradient(
        [&](auto v) {
          return testing::weighted_sum(embed_all(v, f.tables, f.cal, {Tensor({3, 2, 1}, 0.7), acc, reg, 2}));
        },
        testing::param_values(f.params));
    CHECK(r.max_rel <= 1e-4);
  }
}
