#pragma once

#include <filesystem>

#include "conformer/data.hpp"
#include "conformer/model.hpp"
#include "conformer/params.hpp"

namespace conformer {

// Trained model state: resolved config, normalization and parameters.
struct Checkpoint {
  ModelConfig config;
  NormalizationStats stats;
  ParamSet params;
};

// Layout: 8-byte magic "CFMRCKPT", u64 LE header length, JSON header
// (config, stats, parameter names and shapes), then every parameter as
// f64 LE in enumeration order.
void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
// Throws LoadError on a truncated or malformed file.
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace conformer
