#pragma once

// JSON conversions shared by run configs and checkpoint headers.

#include <json.hpp>

#include "conformer/config.hpp"
#include "conformer/data.hpp"

namespace conformer::detail {

using Json = nlohmann::ordered_json;

Json model_to_json(const ModelConfig& cfg);
// Fields absent from `j` keep their value in `base`.
ModelConfig model_from_json(const nlohmann::json& j, ModelConfig base = {});
Json train_to_json(const TrainConfig& cfg);
TrainConfig train_from_json(const nlohmann::json& j, TrainConfig base = {});
Json synth_to_json(const SynthConfig& cfg);
SynthConfig synth_from_json(const nlohmann::json& j, SynthConfig base = {});
Json stats_to_json(const NormalizationStats& s);
NormalizationStats stats_from_json(const nlohmann::json& j);

}  // namespace conformer::detail
