#include "conformer/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>

#include "conformer/errors.hpp"
#include "conformer/params.hpp"

namespace conformer {

namespace {

// Independent random streams, so changing one knob leaves the others' draws intact.
enum Stream : std::uint64_t { kTopology = 1, kProfile, kNoise, kAccidents, kRegulations, kMissing };

// Hop distance from every node to `source` along edges pointing into it,
// read off the propagation operator; -1 beyond max_hops.
std::vector<int> upstream_hops(const std::vector<std::vector<std::size_t>>& feeders, std::size_t source,
                               int max_hops) {
  std::vector<int> hop(feeders.size(), -1);
  std::queue<std::size_t> frontier;
  hop[source] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const std::size_t v = frontier.front();
    frontier.pop();
    if (hop[v] == max_hops) continue;
    for (std::size_t u : feeders[v])
      if (hop[u] < 0) {
        hop[u] = hop[v] + 1;
        frontier.push(u);
      }
  }
  return hop;
}

struct Footprint {
  std::size_t mark_begin;  // code visible from here
  std::size_t effect_begin;
  std::size_t full_end;    // end of full-depth phase
  std::size_t effect_end;  // recovery complete (exclusive)
  double depth;
};

// Speed multiplier of one event at step t.
double event_multiplier(const Footprint& f, std::size_t t, int recovery_steps) {
  if (t < f.effect_begin || t >= f.effect_end) return 1.0;
  if (t < f.full_end) return 1.0 - f.depth;
  const double k = static_cast<double>(t - f.full_end + 1);
  return 1.0 - f.depth * (1.0 - k / static_cast<double>(recovery_steps + 1));
}

}  // namespace

void SynthConfig::validate() const {
  if (n_nodes == 0 || days == 0) throw ConfigError("synth: n_nodes and days must be >= 1");
  if (interval_minutes <= 0 || 1440 % interval_minutes != 0)
    throw ConfigError("synth: interval_minutes " + std::to_string(interval_minutes) + " does not divide 1440");
  if (start_weekday < 0 || start_weekday > 6) throw ConfigError("synth: start_weekday must be in [0, 6]");
  if (topology != "ring" && topology != "grid" && topology != "random-geometric")
    throw ConfigError("synth: unknown topology '" + topology + "' (ring, grid, random-geometric)");
  if (!(geometric_radius > 0.0)) throw ConfigError("synth: geometric_radius must be > 0");
  if (!(base_speed > 0.0) || node_spread < 0.0 || rush_depth < 0.0 || weekend_factor < 0.0 || noise_std < 0.0)
    throw ConfigError("synth: speed profile parameters must be non-negative (base_speed > 0)");
  if (base_speed - node_spread - rush_depth <= 0.0)
    throw ConfigError("synth: base_speed must exceed node_spread + rush_depth");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("synth: missing_rate must be in [0, 1)");
  if (incident_rate < 0.0 || regulation_ratio < 0.0) throw ConfigError("synth: event rates must be >= 0");
  if (!(drop_factor > 0.0 && drop_factor <= 1.0)) throw ConfigError("synth: drop_factor must be in (0, 1]");
  if (!(hop_attenuation >= 0.0 && hop_attenuation <= 1.0))
    throw ConfigError("synth: hop_attenuation must be in [0, 1]");
  if (decay_hops < 0 || hop_delay < 0 || recovery_steps < 0) throw ConfigError("synth: hop and step counts must be >= 0");
  if (incident_duration < 1 || regulation_duration < 1) throw ConfigError("synth: durations must be >= 1");
  if (!(regulation_cap > 0.0 && regulation_cap <= 1.0)) throw ConfigError("synth: regulation_cap must be in (0, 1]");
}

GraphSpec synth_topology(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = cfg.n_nodes;
  GraphSpec g;
  g.n_nodes = n;
  auto link = [&g](std::size_t a, std::size_t b, double w) {
    g.edges.push_back({a, b, w});
    g.edges.push_back({b, a, w});
  };
  if (cfg.topology == "ring") {
    if (n == 2) link(0, 1, 1.0);
    if (n > 2)
      for (std::size_t i = 0; i < n; ++i) link(i, (i + 1) % n, 1.0);
  } else if (cfg.topology == "grid") {
    const auto width = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    for (std::size_t i = 0; i < n; ++i) {
      if ((i + 1) % width != 0 && i + 1 < n) link(i, i + 1, 1.0);
      if (i + width < n) link(i, i + width, 1.0);
    }
  } else {
    Rng rng(derive_seed(seed, kTopology));
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.uniform();
      y[i] = rng.uniform();
    }
    const double r = cfg.geometric_radius;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = std::hypot(x[i] - x[j], y[i] - y[j]);
        if (d < r) link(i, j, std::exp(-(d / r) * (d / r)));
      }
  }
  return g;
}

SynthOutput synth_generate_detailed(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = cfg.n_nodes;
  const std::size_t per_day = static_cast<std::size_t>(1440 / cfg.interval_minutes);
  const std::size_t steps = cfg.days * per_day;

  SynthOutput out;
  DatasetBundle& b = out.bundle;
  b.graph = synth_topology(cfg, seed);
  b.meta.interval_minutes = cfg.interval_minutes;
  b.meta.start_weekday = cfg.start_weekday;
  b.meta.start_slot = 0;
  b.meta.n_nodes = n;
  b.meta.n_steps = steps;
  b.meta.acc_vocab = static_cast<std::size_t>(cfg.decay_hops) + 2;
  b.meta.reg_vocab = static_cast<std::size_t>(cfg.decay_hops) + 2;
  b.values.assign(steps * n, 0.0);
  b.acc_ids.assign(steps * n, 0);
  b.reg_ids.assign(steps * n, 0);

  // Per-node free-flow speed and peak sensitivity.
  Rng profile_rng(derive_seed(seed, kProfile));
  std::vector<double> free_flow(n), sensitivity(n);
  for (std::size_t i = 0; i < n; ++i) {
    free_flow[i] = cfg.base_speed + profile_rng.uniform(-cfg.node_spread, cfg.node_spread);
    sensitivity[i] = profile_rng.uniform(0.7, 1.0);
  }

  // Clean periodic speed: a daily sinusoid with a half-day harmonic for the two peaks.
  std::vector<double> speed(steps * n);
  const CalendarIndexer cal = CalendarIndexer::from_interval(cfg.interval_minutes, cfg.start_weekday, 0);
  for (std::size_t t = 0; t < steps; ++t) {
    const TimeIndex ti = index_time(static_cast<std::int64_t>(t), cal);
    const double hour = 24.0 * ti.tod / static_cast<double>(per_day);
    const double daily = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (hour - 3.0) / 24.0));
    const double peaks = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (hour - 2.0) / 12.0));
    const double weekend = ti.dow >= 5 ? cfg.weekend_factor : 1.0;
    const double dip = cfg.rush_depth * weekend * (0.4 * daily + 0.6 * peaks);
    for (std::size_t i = 0; i < n; ++i) speed[t * n + i] = free_flow[i] - sensitivity[i] * dip;
  }

  // Upstream feeders of each node per the row-normalized operator.
  const PropagationOperator op = normalize_adjacency(b.graph, false);
  std::vector<std::vector<std::size_t>> feeders(n);
  for (std::size_t u = 0; u < n; ++u)
    for (const auto& e : op.row(u))
      if (e.col != u && e.weight > 0.0) feeders[e.col].push_back(u);

  auto spread = [&](const InjectedEvent& ev, int duration, double source_depth, std::vector<int>& codes,
                    std::vector<double>& multiplier, bool cap) {
    const std::vector<int> hop = upstream_hops(feeders, ev.node, cfg.decay_hops);
    for (std::size_t u = 0; u < n; ++u) {
      if (hop[u] < 0) continue;
      const auto h = static_cast<std::size_t>(hop[u]);
      Footprint f;
      f.mark_begin = ev.onset;
      f.effect_begin = ev.onset + h * static_cast<std::size_t>(cfg.hop_delay);
      f.full_end = f.effect_begin + static_cast<std::size_t>(duration);
      f.effect_end = f.full_end + static_cast<std::size_t>(cfg.recovery_steps);
      f.depth = source_depth * std::pow(cfg.hop_attenuation, static_cast<double>(h));
      const int code = 1 + hop[u];
      for (std::size_t t = f.mark_begin; t < std::min(f.effect_end, steps); ++t) {
        int& c = codes[t * n + u];
        c = c == 0 ? code : std::min(c, code);
        const double m = event_multiplier(f, t, cfg.recovery_steps);
        double& slot = multiplier[t * n + u];
        slot = cap ? std::min(slot, m) : slot * m;
      }
    }
  };

  std::vector<double> acc_mult(steps * n, 1.0), reg_cap(steps * n, 1.0);
  const double p_acc = cfg.incident_rate / static_cast<double>(per_day);
  const double p_reg = cfg.incident_rate * cfg.regulation_ratio / static_cast<double>(per_day);
  Rng acc_rng(derive_seed(seed, kAccidents));
  Rng reg_rng(derive_seed(seed, kRegulations));
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      if (acc_rng.bernoulli(p_acc)) out.accidents.push_back({i, t});
      if (reg_rng.bernoulli(p_reg)) out.regulations.push_back({i, t});
    }
  for (const auto& ev : out.accidents) spread(ev, cfg.incident_duration, 1.0 - cfg.drop_factor, b.acc_ids, acc_mult, false);
  for (const auto& ev : out.regulations)
    spread(ev, cfg.regulation_duration, 1.0 - cfg.regulation_cap, b.reg_ids, reg_cap, true);

  Rng noise_rng(derive_seed(seed, kNoise));
  Rng missing_rng(derive_seed(seed, kMissing));
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = t * n + i;
      double v = speed[c] * acc_mult[c];
      v = std::min(v, reg_cap[c] * free_flow[i]);
      v += cfg.noise_std * noise_rng.normal();
      v = std::max(v, 1.0);
      if (missing_rng.bernoulli(cfg.missing_rate)) v = 0.0;
      b.values[c] = v;
    }
  b.validate();
  return out;
}

DatasetBundle synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  return synth_generate_detailed(cfg, seed).bundle;
}

}  // namespace conformer
