#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "config_json.hpp"
#include "conformer/errors.hpp"

namespace conformer {

namespace detail {

namespace {

// Reads known keys of one JSON object into fields and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError("'" + section_ + "' must be a JSON object");
  }

  template <typename T>
  void field(const std::string& key, T& dst) {
    known_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    const nlohmann::json& v = *it;
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      ok = v.is_number_unsigned();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_integer();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else {
      ok = v.is_string();
    }
    if (!ok) throw ConfigError("'" + path(key) + "' has the wrong type: " + v.dump());
    dst = v.get<T>();
  }

  const nlohmann::json* child(const std::string& key) {
    known_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return section_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!known_.contains(key)) throw ConfigError("unknown key '" + path(key) + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::set<std::string> known_;
};

}  // namespace

Json model_to_json(const ModelConfig& c) {
  Json j;
  j["input_len"] = c.input_len;
  j["horizon"] = c.horizon;
  j["n_nodes"] = c.n_nodes;
  j["input_dim"] = c.input_dim;
  j["dims"] = {{"data", c.dims.data}, {"acc", c.dims.acc},   {"reg", c.dims.reg},
               {"dow", c.dims.dow},   {"tod", c.dims.tod},   {"stae", c.dims.stae}};
  j["d_model"] = c.d_model;
  j["hops"] = c.hops;
  j["n_heads"] = c.n_heads;
  j["n_layers"] = c.n_layers;
  j["dropout"] = c.dropout;
  j["eps"] = c.eps;
  j["self_loops"] = c.self_loops;
  j["steps_per_day"] = c.steps_per_day;
  j["acc_vocab"] = c.acc_vocab;
  j["reg_vocab"] = c.reg_vocab;
  Json abl = Json::array();
  for (Ablation a : c.ablations) abl.push_back(std::string(ablation_name(a)));
  j["ablations"] = abl;
  return j;
}

ModelConfig model_from_json(const nlohmann::json& j, ModelConfig c) {
  ObjectReader r(j, "model");
  r.field("input_len", c.input_len);
  r.field("horizon", c.horizon);
  r.field("n_nodes", c.n_nodes);
  r.field("input_dim", c.input_dim);
  if (const auto* d = r.child("dims")) {
    ObjectReader rd(*d, "model.dims");
    rd.field("data", c.dims.data);
    rd.field("acc", c.dims.acc);
    rd.field("reg", c.dims.reg);
    rd.field("dow", c.dims.dow);
    rd.field("tod", c.dims.tod);
    rd.field("stae", c.dims.stae);
    rd.finish();
  }
  r.field("d_model", c.d_model);
  r.field("hops", c.hops);
  r.field("n_heads", c.n_heads);
  r.field("n_layers", c.n_layers);
  r.field("dropout", c.dropout);
  r.field("eps", c.eps);
  r.field("self_loops", c.self_loops);
  r.field("steps_per_day", c.steps_per_day);
  r.field("acc_vocab", c.acc_vocab);
  r.field("reg_vocab", c.reg_vocab);
  if (const auto* a = r.child("ablations")) {
    if (!a->is_array()) throw ConfigError("'model.ablations' must be an array of names");
    c.ablations.clear();
    for (const auto& name : *a) {
      if (!name.is_string()) throw ConfigError("'model.ablations' must be an array of names");
      c.ablations.insert(parse_ablation(name.get<std::string>()));
    }
  }
  r.finish();
  c.validate();
  return c;
}

Json train_to_json(const TrainConfig& c) {
  Json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["clip_norm"] = c.clip_norm;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["windows_per_epoch"] = c.windows_per_epoch;
  j["per_node_norm"] = c.per_node_norm;
  return j;
}

TrainConfig train_from_json(const nlohmann::json& j, TrainConfig c) {
  ObjectReader r(j, "train");
  r.field("learning_rate", c.learning_rate);
  r.field("batch_size", c.batch_size);
  r.field("max_epochs", c.max_epochs);
  r.field("patience", c.patience);
  r.field("seed", c.seed);
  r.field("clip_norm", c.clip_norm);
  r.field("beta1", c.beta1);
  r.field("beta2", c.beta2);
  r.field("adam_eps", c.adam_eps);
  r.field("windows_per_epoch", c.windows_per_epoch);
  r.field("per_node_norm", c.per_node_norm);
  r.finish();
  c.validate();
  return c;
}

Json synth_to_json(const SynthConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["n_nodes"] = c.n_nodes;
  j["days"] = c.days;
  j["interval_minutes"] = c.interval_minutes;
  j["start_weekday"] = c.start_weekday;
  j["topology"] = c.topology;
  j["geometric_radius"] = c.geometric_radius;
  j["base_speed"] = c.base_speed;
  j["node_spread"] = c.node_spread;
  j["rush_depth"] = c.rush_depth;
  j["weekend_factor"] = c.weekend_factor;
  j["noise_std"] = c.noise_std;
  j["missing_rate"] = c.missing_rate;
  j["incident_rate"] = c.incident_rate;
  j["drop_factor"] = c.drop_factor;
  j["decay_hops"] = c.decay_hops;
  j["hop_attenuation"] = c.hop_attenuation;
  j["hop_delay"] = c.hop_delay;
  j["incident_duration"] = c.incident_duration;
  j["recovery_steps"] = c.recovery_steps;
  j["regulation_ratio"] = c.regulation_ratio;
  j["regulation_duration"] = c.regulation_duration;
  j["regulation_cap"] = c.regulation_cap;
  return j;
}

SynthConfig synth_from_json(const nlohmann::json& j, SynthConfig c) {
  ObjectReader r(j, "synth");
  r.field("seed", c.seed);
  r.field("n_nodes", c.n_nodes);
  r.field("days", c.days);
  r.field("interval_minutes", c.interval_minutes);
  r.field("start_weekday", c.start_weekday);
  r.field("topology", c.topology);
  r.field("geometric_radius", c.geometric_radius);
  r.field("base_speed", c.base_speed);
  r.field("node_spread", c.node_spread);
  r.field("rush_depth", c.rush_depth);
  r.field("weekend_factor", c.weekend_factor);
  r.field("noise_std", c.noise_std);
  r.field("missing_rate", c.missing_rate);
  r.field("incident_rate", c.incident_rate);
  r.field("drop_factor", c.drop_factor);
  r.field("decay_hops", c.decay_hops);
  r.field("hop_attenuation", c.hop_attenuation);
  r.field("hop_delay", c.hop_delay);
  r.field("incident_duration", c.incident_duration);
  r.field("recovery_steps", c.recovery_steps);
  r.field("regulation_ratio", c.regulation_ratio);
  r.field("regulation_duration", c.regulation_duration);
  r.field("regulation_cap", c.regulation_cap);
  r.finish();
  c.validate();
  return c;
}

Json stats_to_json(const NormalizationStats& s) {
  Json j;
  j["per_node"] = s.per_node;
  j["mean"] = s.mean;
  j["std"] = s.std;
  return j;
}

NormalizationStats stats_from_json(const nlohmann::json& j) {
  NormalizationStats s;
  try {
    s.per_node = j.at("per_node").get<bool>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("normalization stats: ") + e.what());
  }
  if (s.mean.empty() || s.mean.size() != s.std.size()) throw ConfigError("normalization stats: size mismatch");
  for (double sd : s.std)
    if (!(sd > 0.0)) throw ConfigError("normalization stats: std must be > 0");
  return s;
}

}  // namespace detail

RunConfig parse_run_config(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("run config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "model")
      cfg.model = detail::model_from_json(value);
    else if (key == "train")
      cfg.train = detail::train_from_json(value);
    else if (key == "synth")
      cfg.synth = detail::synth_from_json(value);
    else
      throw ConfigError("unknown key '" + key + "' (expected model, train, synth)");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  detail::Json j;
  j["model"] = detail::model_to_json(cfg.model);
  j["train"] = detail::train_to_json(cfg.train);
  j["synth"] = detail::synth_to_json(cfg.synth);
  return j.dump(2) + "\n";
}

}  // namespace conformer
