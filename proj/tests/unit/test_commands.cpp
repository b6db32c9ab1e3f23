#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "conformer/commands.hpp"
#include "conformer/config.hpp"
#include "conformer/data.hpp"
#include "conformer/errors.hpp"
#include "test_support.hpp"

using namespace conformer;
using conformer::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "conformer");
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Small and fast: 6 nodes, 2 days of 30-minute steps, short windows.
fs::path write_tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.json";
  std::ofstream(p) << R"({
  "model": {"input_len": 4, "horizon": 3, "d_model": 8, "n_heads": 2, "hops": 1,
            "dims": {"data": 2, "acc": 2, "reg": 2, "dow": 2, "tod": 2, "stae": 2}},
  "train": {"max_epochs": 2, "batch_size": 4, "windows_per_epoch": 8, "patience": 5},
  "synth": {"n_nodes": 6, "days": 2, "interval_minutes": 30, "incident_rate": 2.0}
})";
  return p;
}

}  // namespace

TEST_SUITE("commands") {
  TEST_CASE("run config round trip and strictness") {
    RunConfig c;
    c.model.d_model = 24;
    c.model.ablations = {Ablation::kNoBeta, Ablation::kNoSpatial};
    c.train.learning_rate = 3e-4;
    c.synth.topology = "grid";
    c.synth.seed = 77;
    CHECK(parse_run_config(dump_run_config(c)) == c);
    CHECK(parse_run_config("{}") == RunConfig{});

    auto error_of = [](const std::string& text) {
      try {
        (void)parse_run_config(text);
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(error_of(R"({"model": {"d_modle": 8}})").find("model.d_modle") != std::string::npos);
    CHECK(error_of(R"({"extra": {}})").find("extra") != std::string::npos);
    CHECK(error_of(R"({"train": {"learning_rate": "fast"}})") != "");
    CHECK(error_of(R"({"train": {"learning_rate": 0}})") != "");
    CHECK(error_of(R"({"model": {"ablations": ["no-gravity"]}})") != "");
    CHECK(error_of("{not json") != "");
  }

  TEST_CASE("synth writes a valid dataset, deterministically") {
    TempDir dir("synth");
    const fs::path cfg = write_tiny_config(dir.path());
    const Run r = cli({"synth", "--config", cfg.string(), "--seed", "3", "--out", (dir.path() / "a").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("synth: N=6 steps=96") != std::string::npos);
    for (const char* f : {"values.csv", "incidents.csv", "adjacency.csv", "meta.json", "run_config.json"})
      CHECK(fs::exists(dir.path() / "a" / f));
    CHECK_NOTHROW(load_dataset(dir.path() / "a"));

    REQUIRE(cli({"synth", "--config", cfg.string(), "--seed", "3", "--out", (dir.path() / "b").string()}).code == 0);
    REQUIRE(cli({"synth", "--config", cfg.string(), "--seed", "4", "--out", (dir.path() / "c").string()}).code == 0);
    for (const char* f : {"values.csv", "incidents.csv", "adjacency.csv", "meta.json", "run_config.json"})
      CHECK(slurp(dir.path() / "a" / f) == slurp(dir.path() / "b" / f));
    CHECK(slurp(dir.path() / "a" / "values.csv") != slurp(dir.path() / "c" / "values.csv"));

    REQUIRE(cli({"synth", "--config", cfg.string(), "--incident-rate", "0", "--out", (dir.path() / "z").string()})
                .code == 0);
    CHECK(slurp(dir.path() / "z" / "incidents.csv") == "t,node,kind,code\n");

    const Run bad = cli({"synth", "--topology", "hypercube", "--out", (dir.path() / "h").string()});
    CHECK(bad.code != 0);
    CHECK(bad.err.find("hypercube") != std::string::npos);
  }

  TEST_CASE("train, evaluate and predict") {
    TempDir dir("train");
    const fs::path cfg = write_tiny_config(dir.path());
    const fs::path data = dir.path() / "data";
    REQUIRE(cli({"synth", "--config", cfg.string(), "--out", data.string()}).code == 0);

    const fs::path run = dir.path() / "run";
    const Run t = cli({"train", "--config", cfg.string(), "--data", data.string(), "--out", run.string(), "--ablate",
                       "no-accident", "--seed", "5"});
    CAPTURE(t.err);
    REQUIRE(t.code == 0);
    for (const char* f : {"checkpoint.bin", "history.csv", "run_config.json"}) CHECK(fs::exists(run / f));
    const auto history = lines(slurp(run / "history.csv"));
    CHECK(history.front() == "epoch,train_mae,val_mae");
    CHECK(history.size() == 3);
    const RunConfig resolved = load_run_config(run / "run_config.json");
    CHECK(resolved.model.has(Ablation::kNoAccident));
    CHECK(resolved.model.n_nodes == 6);
    CHECK(resolved.model.steps_per_day == 48);
    CHECK(resolved.train.seed == 5);

    const fs::path rerun = dir.path() / "rerun";
    REQUIRE(cli({"train", "--config", cfg.string(), "--data", data.string(), "--out", rerun.string(), "--ablate",
                 "no-accident", "--seed", "5"})
                .code == 0);
    CHECK(slurp(run / "history.csv") == slurp(rerun / "history.csv"));
    CHECK(slurp(run / "checkpoint.bin") == slurp(rerun / "checkpoint.bin"));

    const fs::path ckpt = run / "checkpoint.bin";
    const Run e = cli({"evaluate", "--checkpoint", ckpt.string(), "--data", data.string(), "--horizons", "1,3",
                       "--out", (dir.path() / "eval").string()});
    REQUIRE(e.code == 0);
    const auto metrics = lines(slurp(dir.path() / "eval" / "metrics.csv"));
    REQUIRE(metrics.size() == 4);
    CHECK(metrics[0] == "horizon,mae,rmse,mape,count");
    CHECK(metrics[1].rfind("1,", 0) == 0);
    CHECK(metrics[2].rfind("3,", 0) == 0);
    CHECK(metrics[3].rfind("avg,", 0) == 0);

    CHECK(cli({"evaluate", "--checkpoint", ckpt.string(), "--data", data.string(), "--horizons", "4"}).code != 0);
    CHECK(cli({"evaluate", "--checkpoint", ckpt.string(), "--data", data.string(), "--horizons", "0"}).code != 0);
    CHECK(cli({"evaluate", "--checkpoint", ckpt.string(), "--data", data.string(), "--baseline"}).code == 0);

    const Run p = cli({"predict", "--checkpoint", ckpt.string(), "--data", data.string(), "--at", "10", "--out",
                       (dir.path() / "pred").string()});
    REQUIRE(p.code == 0);
    const auto rows = lines(slurp(dir.path() / "pred" / "prediction.csv"));
    REQUIRE(rows.size() == 4);  // header + T'
    CHECK(rows[0] == "horizon,0,1,2,3,4,5");
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::count(rows[i].begin(), rows[i].end(), ',') == 6);
    CHECK(cli({"predict", "--checkpoint", ckpt.string(), "--data", data.string(), "--at", "95", "--out",
               (dir.path() / "pred2").string()})
              .code != 0);

    // A dataset with a different node count does not fit the checkpoint.
    const fs::path other = dir.path() / "other";
    REQUIRE(cli({"synth", "--config", cfg.string(), "--nodes", "5", "--out", other.string()}).code == 0);
    const Run mismatch = cli({"evaluate", "--checkpoint", ckpt.string(), "--data", other.string()});
    CHECK(mismatch.code != 0);
    CHECK(mismatch.err.find("nodes") != std::string::npos);
  }

  TEST_CASE("train refuses an invalid dataset") {
    TempDir dir("train_bad");
    const fs::path cfg = write_tiny_config(dir.path());
    const fs::path data = dir.path() / "data";
    REQUIRE(cli({"synth", "--config", cfg.string(), "--out", data.string()}).code == 0);
    std::ofstream(data / "incidents.csv") << "t,node,kind,code\n0,99,acc,1\n";
    const Run r = cli({"train", "--config", cfg.string(), "--data", data.string(), "--out",
                       (dir.path() / "run").string()});
    CHECK(r.code != 0);
    CHECK(r.err.find("incidents.csv:2") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path() / "run" / "checkpoint.bin"));
  }

  TEST_CASE("flops and parameter count") {
    const Run r = cli({"flops", "--hops", "2", "--edges", "10", "--d-model", "4", "--nodes", "3", "--input-len", "2"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("flops: 296\n") != std::string::npos);
    CHECK(r.out.find("params: ") != std::string::npos);
    CHECK(cli({"flops", "--d-model", "6", "--heads", "4"}).code != 0);
    CHECK(cli({"bogus"}).code != 0);
    CHECK(cli({"train", "--data", "x", "--out", "y", "--ablate", "no-gravity"}).code != 0);
  }
}
