#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conformer/config.hpp"
#include "conformer/trainer.hpp"

namespace conformer {

// Command implementations behind the `conformer` executable. Each writes its
// artifacts, reports to `out` and throws on failure; run_cli turns failures
// into a nonzero exit code.

// values.csv, incidents.csv, adjacency.csv, meta.json and run_config.json in out_dir.
int cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out);

// checkpoint.bin, history.csv and run_config.json in out_dir.
int cmd_train(const std::filesystem::path& data_dir, const RunConfig& cfg, const std::filesystem::path& out_dir,
              std::ostream& out);

enum class Split { kTrain, kVal, kTest };
Split parse_split(const std::string& name);

struct EvaluateOptions {
  std::vector<std::size_t> horizons;  // empty: every horizon
  Split split = Split::kTest;
  bool baseline = false;              // historical inertia instead of the model
  std::optional<std::filesystem::path> out_dir;  // metrics.csv goes here when set
};

int cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                 const EvaluateOptions& opts, std::ostream& out);

// prediction.csv in out_dir: T' rows, one column per node, original units.
int cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir, std::size_t at,
                const std::filesystem::path& out_dir, std::ostream& out);

// Prints "flops: <n>" and "params: <n>".
int cmd_flops(const ModelConfig& cfg, std::size_t n_edges, std::ostream& out);

// Metrics table as CSV: header, one row per requested horizon, then "avg".
std::string metrics_csv(const EvaluationTable& table);
std::string history_csv(std::span<const EpochRecord> history);

// Parses `args` (program name first) and dispatches. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace conformer
