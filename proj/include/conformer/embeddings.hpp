#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "conformer/autodiff.hpp"
#include "conformer/params.hpp"

namespace conformer {

// Maps absolute step indices to (day of week, slot of day).
struct CalendarIndexer {
  int steps_per_day = 288;
  int start_weekday = 0;  // 0..6
  int start_slot = 0;     // 0..steps_per_day-1

  // Throws ConfigError unless interval_minutes divides 1440.
  static CalendarIndexer from_interval(int interval_minutes, int start_weekday = 0, int start_slot = 0);
};

struct TimeIndex {
  int dow = 0;
  int tod = 0;

  friend bool operator==(const TimeIndex&, const TimeIndex&) = default;
};

TimeIndex index_time(std::int64_t t, const CalendarIndexer& cal);

struct EmbeddingDims {
  std::size_t data = 16;
  std::size_t acc = 8;
  std::size_t reg = 8;
  std::size_t dow = 8;
  std::size_t tod = 8;
  std::size_t stae = 16;

  std::size_t total() const { return data + acc + reg + dow + tod + stae; }

  friend bool operator==(const EmbeddingDims&, const EmbeddingDims&) = default;
};

struct EmbeddingShape {
  std::size_t window = 12;  // T
  std::size_t n_nodes = 1;  // N
  std::size_t input_dim = 1;
  std::size_t d_model = 32;
  std::size_t steps_per_day = 288;
  std::size_t acc_vocab = 2;
  std::size_t reg_vocab = 2;
  EmbeddingDims dims;
};

// Parameter ids of every input embedding. Row 0 of the accident and
// regulation tables stands for "no incident".
struct EmbeddingTables {
  EmbeddingShape shape;
  Linear data_proj;
  std::size_t acc = 0;
  std::size_t reg = 0;
  std::size_t dow = 0;
  std::size_t tod = 0;
  std::size_t adaptive = 0;  // [T, N, D_stae], indexed by position in window
  Linear fuse;

  static EmbeddingTables create(ParamSet& params, const EmbeddingShape& shape, Rng& rng);
};

struct EmbeddingInputs {
  const Tensor& values;             // [T, N, D_in], already normalized
  std::span<const int> acc_ids;     // T*N
  std::span<const int> reg_ids;     // T*N
  std::int64_t t0 = 0;              // absolute step of the first row
};

// X^data | X^acc | X^reg | X^dow | X^tod | X^stae, shape [T, N, total()].
Var embedding_blocks(std::span<const Var> bound, const EmbeddingTables& tables,
                     const CalendarIndexer& cal, const EmbeddingInputs& in);

// Fused input embedding X^o = fuse(embedding_blocks(...)), shape [T, N, D_model].
Var embed_all(std::span<const Var> bound, const EmbeddingTables& tables, const CalendarIndexer& cal,
              const EmbeddingInputs& in);

}  // namespace conformer
