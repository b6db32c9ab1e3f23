#include "conformer/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "conformer/errors.hpp"

namespace conformer {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail_at(const fs::path& file, std::size_t line, const std::string& what) {
  throw LoadError(file.filename().string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

// Reads a headed CSV file; calls row(fields, line_number) for every data row.
template <typename RowFn>
void read_csv(const fs::path& file, std::string_view header, std::size_t n_fields, RowFn row) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw LoadError(file.filename().string() + ": cannot open " + file.string());
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) fail_at(file, 1, "missing header");
  ++lineno;
  if (line != header) fail_at(file, lineno, "expected header '" + std::string(header) + "'");
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != n_fields)
      fail_at(file, lineno, "expected " + std::to_string(n_fields) + " fields, got " + std::to_string(fields.size()));
    row(fields, lineno);
  }
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_file(const fs::path& file, const std::string& body) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + file.string());
  out << body;
  if (!out) throw LoadError("write failed for " + file.string());
}

DatasetMeta read_meta(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw LoadError(file.filename().string() + ": cannot open " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(file.filename().string() + ":" + std::to_string(e.byte) + ": " + e.what());
  }
  static const std::vector<std::string> kKeys{"interval_minutes", "start_weekday", "start_slot", "n_nodes",
                                              "n_steps",          "acc_vocab",     "reg_vocab"};
  if (!j.is_object()) throw LoadError(file.filename().string() + ":1: expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end())
      throw LoadError(file.filename().string() + ":1: unknown key '" + key + "'");
  DatasetMeta m;
  try {
    m.interval_minutes = j.at("interval_minutes").get<int>();
    m.start_weekday = j.at("start_weekday").get<int>();
    m.start_slot = j.at("start_slot").get<int>();
    m.n_nodes = j.at("n_nodes").get<std::size_t>();
    m.n_steps = j.at("n_steps").get<std::size_t>();
    m.acc_vocab = j.at("acc_vocab").get<std::size_t>();
    m.reg_vocab = j.at("reg_vocab").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(file.filename().string() + ":1: " + e.what());
  }
  if (m.interval_minutes <= 0 || 1440 % m.interval_minutes != 0)
    throw LoadError(file.filename().string() + ":1: interval_minutes " + std::to_string(m.interval_minutes) +
                    " does not divide 1440");
  if (m.n_nodes == 0 || m.n_steps == 0) throw LoadError(file.filename().string() + ":1: empty dataset");
  if (m.acc_vocab == 0 || m.reg_vocab == 0) throw LoadError(file.filename().string() + ":1: vocab must be >= 1");
  return m;
}

}  // namespace

CalendarIndexer DatasetBundle::calendar() const {
  return CalendarIndexer::from_interval(meta.interval_minutes, meta.start_weekday, meta.start_slot);
}

void DatasetBundle::validate() const {
  const std::size_t cells = meta.n_steps * meta.n_nodes;
  if (cells == 0) throw ValidationError("dataset has no cells");
  if (values.size() != cells || acc_ids.size() != cells || reg_ids.size() != cells)
    throw ValidationError("array sizes disagree with n_steps * n_nodes = " + std::to_string(cells));
  if (graph.n_nodes != meta.n_nodes)
    throw ValidationError("graph has " + std::to_string(graph.n_nodes) + " nodes, meta says " +
                          std::to_string(meta.n_nodes));
  graph.validate();
  try {
    (void)calendar();
  } catch (const ConfigError& e) {
    throw ValidationError(e.what());
  }
  for (std::size_t i = 0; i < cells; ++i) {
    if (!std::isfinite(values[i]))
      throw ValidationError("non-finite value at t=" + std::to_string(i / meta.n_nodes) +
                            " node=" + std::to_string(i % meta.n_nodes));
    if (acc_ids[i] < 0 || static_cast<std::size_t>(acc_ids[i]) >= meta.acc_vocab ||
        reg_ids[i] < 0 || static_cast<std::size_t>(reg_ids[i]) >= meta.reg_vocab)
      throw ValidationError("incident code out of vocabulary at t=" + std::to_string(i / meta.n_nodes) +
                            " node=" + std::to_string(i % meta.n_nodes));
  }
}

DatasetBundle load_dataset(const fs::path& dir) {
  DatasetBundle b;
  b.meta = read_meta(dir / "meta.json");
  const std::size_t n = b.meta.n_nodes;
  const std::size_t steps = b.meta.n_steps;
  const std::size_t cells = n * steps;

  auto parse_index = [](const fs::path& file, std::size_t line, std::string_view s, std::size_t bound,
                        const char* what) {
    std::size_t v = 0;
    if (!parse_number(s, v)) fail_at(file, line, std::string("malformed ") + what + " '" + std::string(s) + "'");
    if (v >= bound)
      fail_at(file, line, std::string(what) + " " + std::to_string(v) + " out of range [0, " +
                              std::to_string(bound) + ")");
    return v;
  };

  const fs::path values_file = dir / "values.csv";
  b.values.assign(cells, 0.0);
  std::vector<unsigned char> seen(cells, 0);
  read_csv(values_file, "t,node,value", 3, [&](const auto& f, std::size_t line) {
    const std::size_t t = parse_index(values_file, line, f[0], steps, "t");
    const std::size_t node = parse_index(values_file, line, f[1], n, "node");
    double v = 0.0;
    if (!parse_number(f[2], v) || !std::isfinite(v))
      fail_at(values_file, line, "malformed value '" + std::string(f[2]) + "'");
    if (seen[t * n + node]) fail_at(values_file, line, "duplicate (t, node)");
    seen[t * n + node] = 1;
    b.values[t * n + node] = v;
  });
  if (const auto it = std::find(seen.begin(), seen.end(), 0); it != seen.end()) {
    const std::size_t i = static_cast<std::size_t>(it - seen.begin());
    throw LoadError("values.csv: missing row for t=" + std::to_string(i / n) + " node=" + std::to_string(i % n));
  }

  const fs::path inc_file = dir / "incidents.csv";
  b.acc_ids.assign(cells, 0);
  b.reg_ids.assign(cells, 0);
  read_csv(inc_file, "t,node,kind,code", 4, [&](const auto& f, std::size_t line) {
    const std::size_t t = parse_index(inc_file, line, f[0], steps, "t");
    const std::size_t node = parse_index(inc_file, line, f[1], n, "node");
    std::vector<int>* ids = nullptr;
    std::size_t vocab = 0;
    if (f[2] == "acc") {
      ids = &b.acc_ids;
      vocab = b.meta.acc_vocab;
    } else if (f[2] == "reg") {
      ids = &b.reg_ids;
      vocab = b.meta.reg_vocab;
    } else {
      fail_at(inc_file, line, "kind must be acc or reg, got '" + std::string(f[2]) + "'");
    }
    const std::size_t code = parse_index(inc_file, line, f[3], vocab, "code");
    (*ids)[t * n + node] = static_cast<int>(code);
  });

  const fs::path adj_file = dir / "adjacency.csv";
  b.graph.n_nodes = n;
  read_csv(adj_file, "src,dst,weight", 3, [&](const auto& f, std::size_t line) {
    Edge e;
    e.src = parse_index(adj_file, line, f[0], n, "src");
    e.dst = parse_index(adj_file, line, f[1], n, "dst");
    if (!parse_number(f[2], e.weight) || !std::isfinite(e.weight) || e.weight < 0.0)
      fail_at(adj_file, line, "malformed weight '" + std::string(f[2]) + "'");
    b.graph.edges.push_back(e);
  });

  try {
    b.validate();
  } catch (const ValidationError& e) {
    throw LoadError(dir.string() + ": " + e.what());
  }
  return b;
}

void save_dataset(const DatasetBundle& bundle, const fs::path& dir) {
  bundle.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw LoadError("cannot create " + dir.string() + ": " + ec.message());
  const std::size_t n = bundle.meta.n_nodes;

  std::string values = "t,node,value\n";
  std::string incidents = "t,node,kind,code\n";
  for (std::size_t t = 0; t < bundle.meta.n_steps; ++t) {
    for (std::size_t node = 0; node < n; ++node) {
      const std::size_t i = t * n + node;
      const std::string prefix = std::to_string(t) + "," + std::to_string(node) + ",";
      values += prefix + format_double(bundle.values[i]) + "\n";
      if (bundle.acc_ids[i] != 0) incidents += prefix + "acc," + std::to_string(bundle.acc_ids[i]) + "\n";
      if (bundle.reg_ids[i] != 0) incidents += prefix + "reg," + std::to_string(bundle.reg_ids[i]) + "\n";
    }
  }
  std::string adjacency = "src,dst,weight\n";
  for (const Edge& e : bundle.graph.edges)
    adjacency += std::to_string(e.src) + "," + std::to_string(e.dst) + "," + format_double(e.weight) + "\n";

  nlohmann::ordered_json meta;
  meta["interval_minutes"] = bundle.meta.interval_minutes;
  meta["start_weekday"] = bundle.meta.start_weekday;
  meta["start_slot"] = bundle.meta.start_slot;
  meta["n_nodes"] = bundle.meta.n_nodes;
  meta["n_steps"] = bundle.meta.n_steps;
  meta["acc_vocab"] = bundle.meta.acc_vocab;
  meta["reg_vocab"] = bundle.meta.reg_vocab;

  write_file(dir / "values.csv", values);
  write_file(dir / "incidents.csv", incidents);
  write_file(dir / "adjacency.csv", adjacency);
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

SplitSpec SplitSpec::chronological(std::size_t total, double train_frac, double val_frac) {
  if (!(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0))
    throw ConfigError("split fractions must be positive and sum to at most 1");
  const auto train_end = static_cast<std::size_t>(std::llround(static_cast<double>(total) * train_frac));
  const auto val_end =
      std::min(total, static_cast<std::size_t>(std::llround(static_cast<double>(total) * (train_frac + val_frac))));
  return {{0, train_end}, {train_end, val_end}, {val_end, total}};
}

NormalizationStats NormalizationStats::fit(const DatasetBundle& bundle, IndexRange train, bool per_node) {
  const std::size_t n = bundle.nodes();
  if (train.end > bundle.steps() || train.size() == 0) throw ConfigError("normalization range is empty or out of bounds");
  const std::size_t groups = per_node ? n : 1;
  std::vector<double> sum(groups, 0.0), count(groups, 0.0);
  for (std::size_t t = train.begin; t < train.end; ++t)
    for (std::size_t node = 0; node < n; ++node) {
      const double v = bundle.value(t, node);
      if (v == 0.0) continue;
      const std::size_t g = per_node ? node : 0;
      sum[g] += v;
      count[g] += 1.0;
    }
  NormalizationStats s;
  s.per_node = per_node;
  s.mean.resize(groups);
  s.std.resize(groups);
  for (std::size_t g = 0; g < groups; ++g) s.mean[g] = count[g] > 0.0 ? sum[g] / count[g] : 0.0;
  std::vector<double> sq(groups, 0.0);
  for (std::size_t t = train.begin; t < train.end; ++t)
    for (std::size_t node = 0; node < n; ++node) {
      const double v = bundle.value(t, node);
      if (v == 0.0) continue;
      const std::size_t g = per_node ? node : 0;
      sq[g] += (v - s.mean[g]) * (v - s.mean[g]);
    }
  for (std::size_t g = 0; g < groups; ++g) {
    const double sd = count[g] > 0.0 ? std::sqrt(sq[g] / count[g]) : 0.0;
    // Constant or empty series: unit scale keeps the transform invertible.
    s.std[g] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

double NormalizationStats::apply(double v, std::size_t node) const { return (v - mean_of(node)) / std_of(node); }

double NormalizationStats::invert(double z, std::size_t node) const { return z * std_of(node) + mean_of(node); }

std::vector<std::size_t> make_windows(IndexRange range, std::size_t input_len, std::size_t horizon) {
  std::vector<std::size_t> starts;
  const std::size_t span = input_len + horizon;
  if (range.size() < span) return starts;
  for (std::size_t t0 = range.begin; t0 + span <= range.end; ++t0) starts.push_back(t0);
  return starts;
}

WindowInput window_input(const DatasetBundle& bundle, const NormalizationStats& stats, std::size_t t0,
                         std::size_t input_len) {
  const std::size_t n = bundle.nodes();
  if (t0 + input_len > bundle.steps())
    throw DimensionError("window [" + std::to_string(t0) + ", " + std::to_string(t0 + input_len) +
                         ") exceeds " + std::to_string(bundle.steps()) + " steps");
  WindowInput in{Tensor({input_len, n, 1}), {}, {}, static_cast<std::int64_t>(t0)};
  in.acc_ids.resize(input_len * n);
  in.reg_ids.resize(input_len * n);
  for (std::size_t t = 0; t < input_len; ++t)
    for (std::size_t node = 0; node < n; ++node) {
      const std::size_t src = (t0 + t) * n + node;
      in.values[t * n + node] = stats.apply(bundle.values[src], node);
      in.acc_ids[t * n + node] = bundle.acc_ids[src];
      in.reg_ids[t * n + node] = bundle.reg_ids[src];
    }
  return in;
}

Tensor window_target(const DatasetBundle& bundle, std::size_t t0, std::size_t input_len, std::size_t horizon) {
  const std::size_t n = bundle.nodes();
  const std::size_t first = t0 + input_len;
  if (first + horizon > bundle.steps())
    throw DimensionError("target window ends at " + std::to_string(first + horizon) + ", dataset has " +
                         std::to_string(bundle.steps()) + " steps");
  Tensor y({horizon, n, 1});
  std::copy_n(bundle.values.begin() + static_cast<std::ptrdiff_t>(first * n), horizon * n, y.storage().begin());
  return y;
}

ModelConfig resolve_model_config(ModelConfig cfg, const DatasetBundle& bundle) {
  cfg.n_nodes = bundle.nodes();
  cfg.steps_per_day = static_cast<std::size_t>(1440 / bundle.meta.interval_minutes);
  cfg.acc_vocab = bundle.meta.acc_vocab;
  cfg.reg_vocab = bundle.meta.reg_vocab;
  return cfg;
}

}  // namespace conformer
