#include "conformer/commands.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "conformer/checkpoint.hpp"
#include "conformer/errors.hpp"
#include "conformer/model.hpp"
#include "conformer/synth.hpp"

namespace conformer {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw LoadError("cannot write " + file.string());
  f << text;
  if (!f) throw LoadError("write failed for " + file.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw LoadError("cannot create " + dir.string() + ": " + ec.message());
}

IndexRange split_range(const DatasetBundle& bundle, Split s) {
  const SplitSpec spec = SplitSpec::chronological(bundle.steps());
  switch (s) {
    case Split::kTrain: return spec.train;
    case Split::kVal: return spec.val;
    case Split::kTest: return spec.test;
  }
  return spec.test;
}

ConFormer restore(const Checkpoint& ckpt, const DatasetBundle& bundle) {
  const ModelConfig& c = ckpt.config;
  if (c.n_nodes != bundle.nodes() || c.acc_vocab != bundle.meta.acc_vocab || c.reg_vocab != bundle.meta.reg_vocab ||
      c.steps_per_day != static_cast<std::size_t>(1440 / bundle.meta.interval_minutes))
    throw DimensionError("checkpoint was trained for a dataset with " + std::to_string(c.n_nodes) +
                         " nodes, vocabularies " + std::to_string(c.acc_vocab) + "/" + std::to_string(c.reg_vocab) +
                         " and " + std::to_string(c.steps_per_day) + " steps per day; this dataset differs");
  return ConFormer(c, bundle.graph, bundle.calendar(), ckpt.params);
}

std::vector<std::size_t> parse_horizons(const std::string& csv) {
  std::vector<std::size_t> out;
  if (csv.empty()) return out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw ConfigError("--horizons expects a comma-separated list of integers, got '" + csv + "'");
    out.push_back(v);
  }
  return out;
}

void print_metrics_table(const EvaluationTable& table, std::ostream& out) {
  auto line = [&](const std::string& label, const std::optional<MaskedMetrics>& m) {
    out << label << ": ";
    if (m)
      out << "mae " << m->mae << "  rmse " << m->rmse << "  mape " << m->mape << "%  (n=" << m->count << ")\n";
    else
      out << "no nonzero targets\n";
  };
  for (const auto& row : table.rows) line("horizon " + std::to_string(row.horizon), row.metrics);
  line("average", table.average);
}

}  // namespace

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "' (train, val, test)");
}

std::string metrics_csv(const EvaluationTable& table) {
  std::string s = "horizon,mae,rmse,mape,count\n";
  auto row = [&](const std::string& label, const std::optional<MaskedMetrics>& m) {
    if (m)
      s += label + "," + num(m->mae) + "," + num(m->rmse) + "," + num(m->mape) + "," + std::to_string(m->count) + "\n";
    else
      s += label + ",,,,0\n";
  };
  for (const auto& r : table.rows) row(std::to_string(r.horizon), r.metrics);
  row("avg", table.average);
  return s;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::string s = "epoch,train_mae,val_mae\n";
  for (const auto& r : history) s += std::to_string(r.epoch) + "," + num(r.train_mae) + "," + num(r.val_mae) + "\n";
  return s;
}

int cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const SynthOutput gen = synth_generate_detailed(cfg.synth, cfg.synth.seed);
  save_dataset(gen.bundle, out_dir);
  write_text(out_dir / "run_config.json", dump_run_config(cfg));
  out << "synth: N=" << gen.bundle.nodes() << " steps=" << gen.bundle.steps()
      << " accidents=" << gen.accidents.size() << " regulations=" << gen.regulations.size() << " -> "
      << out_dir.string() << "\n";
  return 0;
}

int cmd_train(const fs::path& data_dir, const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const DatasetBundle bundle = load_dataset(data_dir);
  ensure_dir(out_dir);
  RunConfig resolved = cfg;
  resolved.model = resolve_model_config(cfg.model, bundle);
  write_text(out_dir / "run_config.json", dump_run_config(resolved));

  const TrainResult result = train(bundle, resolved.model, resolved.train, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << "  train_mae " << r.train_mae << "  val_mae " << r.val_mae << "\n";
  });
  save_checkpoint(out_dir / "checkpoint.bin", {result.model_config, result.stats, result.best_params});
  write_text(out_dir / "history.csv", history_csv(result.history));
  out << "best epoch " << result.best_epoch << " of " << result.history.size() << "; wrote "
      << (out_dir / "checkpoint.bin").string() << "\n";
  return 0;
}

int cmd_evaluate(const fs::path& checkpoint, const fs::path& data_dir, const EvaluateOptions& opts,
                 std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  std::vector<std::size_t> horizons = opts.horizons;
  if (horizons.empty())
    for (std::size_t h = 1; h <= ckpt.config.horizon; ++h) horizons.push_back(h);
  check_horizons(horizons, ckpt.config.horizon);

  const DatasetBundle bundle = load_dataset(data_dir);
  const ConFormer model = restore(ckpt, bundle);
  const IndexRange range = split_range(bundle, opts.split);
  const ModelConfig& c = ckpt.config;
  const EvaluationTable table =
      opts.baseline
          ? evaluate_predictor(bundle, range, c.input_len, c.horizon, horizons,
                               [&](std::size_t t0) { return historical_inertia(bundle, t0, c.input_len, c.horizon); })
          : evaluate(model, ckpt.stats, bundle, range, horizons);
  print_metrics_table(table, out);
  if (opts.out_dir) {
    ensure_dir(*opts.out_dir);
    write_text(*opts.out_dir / "metrics.csv", metrics_csv(table));
  }
  return 0;
}

int cmd_predict(const fs::path& checkpoint, const fs::path& data_dir, std::size_t at, const fs::path& out_dir,
                std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const DatasetBundle bundle = load_dataset(data_dir);
  const ConFormer model = restore(ckpt, bundle);
  const ModelConfig& c = ckpt.config;
  if (at + c.input_len > bundle.steps())
    throw ConfigError("--at " + std::to_string(at) + ": input window needs steps up to " +
                      std::to_string(at + c.input_len) + ", dataset has " + std::to_string(bundle.steps()));
  const Tensor y = forecast(model, bundle, ckpt.stats, at);
  const std::size_t n = bundle.nodes();
  std::string csv = "horizon";
  for (std::size_t node = 0; node < n; ++node) csv += "," + std::to_string(node);
  csv += "\n";
  for (std::size_t h = 0; h < c.horizon; ++h) {
    csv += std::to_string(h + 1);
    for (std::size_t node = 0; node < n; ++node) csv += "," + num(y[h * n + node]);
    csv += "\n";
  }
  ensure_dir(out_dir);
  write_text(out_dir / "prediction.csv", csv);
  out << "predicted " << c.horizon << " x " << n << " from t=" << at << " -> "
      << (out_dir / "prediction.csv").string() << "\n";
  return 0;
}

int cmd_flops(const ModelConfig& cfg, std::size_t n_edges, std::ostream& out) {
  cfg.validate();
  const ConFormer model(cfg, GraphSpec{cfg.n_nodes, {}}, CalendarIndexer{static_cast<int>(cfg.steps_per_day), 0, 0},
                        std::uint64_t{0});
  out << "flops: " << estimate_flops(cfg, n_edges) << "\n";
  out << "params: " << count_params(model.params()) << "\n";
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Incident-conditioned spatiotemporal traffic forecasting"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string data_dir;
  std::string checkpoint;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::optional<double> incident_rate;
  std::optional<std::size_t> nodes, days;
  std::optional<std::string> topology;
  synth->add_option("--config", config_path, "Run config JSON");
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--incident-rate", incident_rate, "Accidents per node per day");
  synth->add_option("--nodes", nodes, "Number of nodes");
  synth->add_option("--days", days, "Number of days");
  synth->add_option("--topology", topology, "ring, grid or random-geometric");

  auto* trn = app.add_subcommand("train", "Train a model on a dataset");
  std::vector<std::string> ablate;
  std::optional<std::size_t> epochs;
  trn->add_option("--data", data_dir, "Dataset directory")->required();
  trn->add_option("--config", config_path, "Run config JSON");
  trn->add_option("--seed", seed, "Random seed");
  trn->add_option("--out", out_dir, "Output directory")->required();
  trn->add_option("--ablate", ablate, "Ablation switch (repeatable)");
  trn->add_option("--epochs", epochs, "Maximum epochs");

  auto* eval = app.add_subcommand("evaluate", "Masked metrics of a checkpoint on a split");
  std::string horizons_csv;
  std::string split_name = "test";
  bool baseline = false;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--horizons", horizons_csv, "Comma-separated horizons, default all");
  eval->add_option("--split", split_name, "train, val or test");
  eval->add_flag("--baseline", baseline, "Score historical inertia instead of the model");
  eval->add_option("--out", out_dir, "Directory for metrics.csv");

  auto* pred = app.add_subcommand("predict", "Forecast one window");
  std::size_t at = 0;
  pred->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  pred->add_option("--data", data_dir, "Dataset directory")->required();
  pred->add_option("--at", at, "First step of the input window")->required();
  pred->add_option("--out", out_dir, "Output directory")->required();

  auto* flops = app.add_subcommand("flops", "FLOPs estimate and parameter count");
  std::optional<std::size_t> edges, d_model, input_len, heads;
  std::optional<int> hops;
  flops->add_option("--config", config_path, "Run config JSON");
  flops->add_option("--data", data_dir, "Dataset directory supplying N and the edge count");
  flops->add_option("--edges", edges, "Edge count |E|");
  flops->add_option("--hops", hops, "Propagation hops K");
  flops->add_option("--d-model", d_model, "Model width D");
  flops->add_option("--nodes", nodes, "Number of nodes N");
  flops->add_option("--input-len", input_len, "Input window T");
  flops->add_option("--heads", heads, "Attention heads");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) {
      cfg.train.seed = *seed;
      cfg.synth.seed = *seed;
    }
    if (*synth) {
      if (incident_rate) cfg.synth.incident_rate = *incident_rate;
      if (nodes) cfg.synth.n_nodes = *nodes;
      if (days) cfg.synth.days = *days;
      if (topology) cfg.synth.topology = *topology;
      cfg.synth.validate();
      return cmd_synth(cfg, out_dir, out);
    }
    if (*trn) {
      for (const auto& a : ablate) cfg.model.ablations.insert(parse_ablation(a));
      if (epochs) cfg.train.max_epochs = *epochs;
      cfg.train.validate();
      return cmd_train(data_dir, cfg, out_dir, out);
    }
    if (*eval) {
      EvaluateOptions opts;
      opts.horizons = parse_horizons(horizons_csv);
      opts.split = parse_split(split_name);
      opts.baseline = baseline;
      if (!out_dir.empty()) opts.out_dir = out_dir;
      return cmd_evaluate(checkpoint, data_dir, opts, out);
    }
    if (*pred) return cmd_predict(checkpoint, data_dir, at, out_dir, out);
    if (*flops) {
      ModelConfig m = cfg.model;
      std::size_t n_edges = 0;
      if (!data_dir.empty()) {
        const DatasetBundle bundle = load_dataset(data_dir);
        m = resolve_model_config(m, bundle);
        n_edges = bundle.graph.edges.size();
      }
      if (edges) n_edges = *edges;
      if (hops) m.hops = *hops;
      if (d_model) m.d_model = *d_model;
      if (nodes) m.n_nodes = *nodes;
      if (input_len) m.input_len = *input_len;
      if (heads) m.n_heads = *heads;
      return cmd_flops(m, n_edges, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace conformer
