#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "conformer/data.hpp"

namespace conformer {

// Synthetic road-speed generator settings. Rates are events per node per day.
struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t n_nodes = 30;
  std::size_t days = 14;
  int interval_minutes = 5;
  int start_weekday = 0;
  std::string topology = "ring";  // ring, grid, random-geometric
  double geometric_radius = 0.3;  // random-geometric only, in the unit square

  double base_speed = 60.0;
  double node_spread = 8.0;      // node offsets drawn in [-spread, spread]
  double rush_depth = 18.0;      // peak-hour dip depth on weekdays
  double weekend_factor = 0.35;  // dip depth multiplier on weekends
  double noise_std = 1.0;
  double missing_rate = 0.002;   // fraction of readings zeroed

  double incident_rate = 0.5;
  double drop_factor = 0.4;      // speed multiplier at the source node
  int decay_hops = 2;            // neighbors reached by the slowdown
  double hop_attenuation = 0.5;  // depth multiplier per hop
  int hop_delay = 2;             // onset delay per hop, steps
  int incident_duration = 12;    // full-drop steps at the source
  int recovery_steps = 12;       // linear recovery after the full drop

  double regulation_ratio = 0.2;  // regulations per accident; both vanish at incident_rate 0
  int regulation_duration = 36;
  double regulation_cap = 0.75;  // speed ceiling as a fraction of the node's free-flow speed

  // Throws ConfigError on out-of-range values or unknown topology.
  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct InjectedEvent {
  std::size_t node = 0;
  std::size_t onset = 0;
};

struct SynthOutput {
  DatasetBundle bundle;
  std::vector<InjectedEvent> accidents;
  std::vector<InjectedEvent> regulations;
};

// `seed` overrides cfg.seed.
GraphSpec synth_topology(const SynthConfig& cfg, std::uint64_t seed);
SynthOutput synth_generate_detailed(const SynthConfig& cfg, std::uint64_t seed);
DatasetBundle synth_generate(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace conformer
