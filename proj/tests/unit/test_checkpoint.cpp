#include <doctest.h>

#include <bit>
#include <fstream>
#include <iterator>

#include "conformer/checkpoint.hpp"
#include "conformer/errors.hpp"
#include "test_support.hpp"

using namespace conformer;
using conformer::testing::TempDir;

namespace {

Checkpoint sample_checkpoint() {
  ModelConfig cfg;
  cfg.input_len = 3;
  cfg.horizon = 2;
  cfg.n_nodes = 3;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.hops = 1;
  cfg.steps_per_day = 24;
  cfg.dims = {2, 2, 2, 2, 2, 2};
  cfg.ablations = {Ablation::kNoAccident, Ablation::kPlainLayerNorm};
  GraphSpec g{3, {{0, 1, 1.0}, {1, 2, 1.0}}};
  ConFormer m(cfg, g, CalendarIndexer{24, 0, 0}, 5);
  m.params().value(0)[0] = -0.0;
  m.params().value(0)[1] = 1.0 / 3.0;
  NormalizationStats s;
  s.per_node = true;
  s.mean = {55.5, 61.0 / 3.0, 1e-300};
  s.std = {1.0, 2.5, 7.0};
  return {cfg, s, m.params()};
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_bytes(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

bool load_fails(const std::filesystem::path& p) {
  try {
    (void)load_checkpoint(p);
  } catch (const LoadError&) {
    return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip preserves every bit") {
    TempDir dir("ckpt");
    const Checkpoint c = sample_checkpoint();
    save_checkpoint(dir.path() / "a.bin", c);
    const Checkpoint back = load_checkpoint(dir.path() / "a.bin");
    CHECK(back.config == c.config);
    CHECK(back.stats == c.stats);
    REQUIRE(back.params.size() == c.params.size());
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      CHECK(back.params.name(i) == c.params.name(i));
      REQUIRE(back.params.value(i).shape() == c.params.value(i).shape());
      for (std::size_t j = 0; j < c.params.value(i).size(); ++j)
        CHECK(std::bit_cast<std::uint64_t>(back.params.value(i)[j]) ==
              std::bit_cast<std::uint64_t>(c.params.value(i)[j]));
    }
    // Saving again yields the same bytes.
    save_checkpoint(dir.path() / "b.bin", back);
    CHECK(read_bytes(dir.path() / "a.bin") == read_bytes(dir.path() / "b.bin"));
    CHECK(read_bytes(dir.path() / "a.bin").substr(0, 8) == "CFMRCKPT");
  }

  TEST_CASE("corrupt files are load errors") {
    TempDir dir("ckpt_bad");
    const auto good = dir.path() / "good.bin";
    save_checkpoint(good, sample_checkpoint());
    const std::string bytes = read_bytes(good);
    const auto bad = dir.path() / "bad.bin";

    write_bytes(bad, "NOTACKPT" + bytes.substr(8));
    CHECK(load_fails(bad));
    write_bytes(bad, bytes.substr(0, bytes.size() - 3));
    CHECK(load_fails(bad));
    write_bytes(bad, bytes.substr(0, 12));
    CHECK(load_fails(bad));
    write_bytes(bad, bytes + "x");
    CHECK(load_fails(bad));
    CHECK(load_fails(dir.path() / "missing.bin"));

    // A header shape that disagrees with the payload.
    std::string edited = bytes;
    const auto pos = edited.find("\"shape\"");
    REQUIRE(pos != std::string::npos);
    const auto digit = edited.find_first_of("123456789", pos);
    edited[digit] = edited[digit] == '9' ? '8' : static_cast<char>(edited[digit] + 1);
    write_bytes(bad, edited);
    CHECK(load_fails(bad));
  }
}
