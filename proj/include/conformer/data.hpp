#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "conformer/embeddings.hpp"
#include "conformer/graph.hpp"
#include "conformer/model.hpp"
#include "conformer/tensor.hpp"

namespace conformer {

struct DatasetMeta {
  int interval_minutes = 5;
  int start_weekday = 0;
  int start_slot = 0;
  std::size_t n_nodes = 0;
  std::size_t n_steps = 0;
  std::size_t acc_vocab = 1;
  std::size_t reg_vocab = 1;

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

// Observed values plus incident codes on a road graph. Arrays are [T_total, N]
// row-major. A value of exactly 0 marks a missing observation.
struct DatasetBundle {
  DatasetMeta meta;
  std::vector<double> values;
  std::vector<int> acc_ids;
  std::vector<int> reg_ids;
  GraphSpec graph;

  std::size_t steps() const { return meta.n_steps; }
  std::size_t nodes() const { return meta.n_nodes; }
  double value(std::size_t t, std::size_t n) const { return values[t * meta.n_nodes + n]; }
  CalendarIndexer calendar() const;
  // Throws ValidationError when arrays, ids or meta disagree.
  void validate() const;

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

// Reads values.csv, incidents.csv, adjacency.csv and meta.json from `dir`.
DatasetBundle load_dataset(const std::filesystem::path& dir);
void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);

// Half-open step range [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > begin ? end - begin : 0; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct SplitSpec {
  IndexRange train;
  IndexRange val;
  IndexRange test;

  // Contiguous chronological split by the given proportions.
  static SplitSpec chronological(std::size_t total, double train_frac = 0.6, double val_frac = 0.2);
};

// Z-score statistics fitted on the training range only. Zeros (missing) are
// left out of the fit.
struct NormalizationStats {
  bool per_node = false;
  std::vector<double> mean;  // 1 entry, or one per node
  std::vector<double> std;

  static NormalizationStats fit(const DatasetBundle& bundle, IndexRange train, bool per_node = false);
  double apply(double v, std::size_t node) const;
  double invert(double z, std::size_t node) const;
  double mean_of(std::size_t node) const { return per_node ? mean.at(node) : mean.at(0); }
  double std_of(std::size_t node) const { return per_node ? std.at(node) : std.at(0); }

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

// Start steps of every stride-1 window whose input [t0, t0+T) and target
// [t0+T, t0+T+T') both lie inside `range`. Empty when the range is too short.
std::vector<std::size_t> make_windows(IndexRange range, std::size_t input_len, std::size_t horizon);

// Normalized model input for the window starting at t0.
WindowInput window_input(const DatasetBundle& bundle, const NormalizationStats& stats, std::size_t t0,
                         std::size_t input_len);
// Raw target values [T', N, 1] following the input window.
Tensor window_target(const DatasetBundle& bundle, std::size_t t0, std::size_t input_len, std::size_t horizon);

// Model config with data-derived fields (N, steps per day, vocabularies) filled in.
ModelConfig resolve_model_config(ModelConfig cfg, const DatasetBundle& bundle);

}  // namespace conformer
