#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "conformer/model.hpp"
#include "conformer/synth.hpp"
#include "conformer/trainer.hpp"

namespace conformer {

// Everything one CLI run needs. Loaded from JSON with sections "model",
// "train" and "synth"; every section and key is optional, unknown ones are
// rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& file);
// Pretty-printed JSON holding every field; parse_run_config(dump_run_config(c)) == c.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace conformer
