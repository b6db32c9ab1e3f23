#include "conformer/embeddings.hpp"

#include <string>
#include <vector>

#include "conformer/errors.hpp"

namespace conformer {

CalendarIndexer CalendarIndexer::from_interval(int interval_minutes, int start_weekday, int start_slot) {
  if (interval_minutes <= 0 || 1440 % interval_minutes != 0)
    throw ConfigError("interval of " + std::to_string(interval_minutes) +
                      " minutes does not divide a day");
  CalendarIndexer cal{1440 / interval_minutes, start_weekday, start_slot};
  if (start_weekday < 0 || start_weekday > 6) throw ConfigError("start_weekday must be in 0..6");
  if (start_slot < 0 || start_slot >= cal.steps_per_day)
    throw ConfigError("start_slot must be in 0.." + std::to_string(cal.steps_per_day - 1));
  return cal;
}

TimeIndex index_time(std::int64_t t, const CalendarIndexer& cal) {
  const std::int64_t abs = static_cast<std::int64_t>(cal.start_slot) + t;
  const std::int64_t days = abs / cal.steps_per_day;
  return {static_cast<int>((cal.start_weekday + days) % 7), static_cast<int>(abs % cal.steps_per_day)};
}

EmbeddingTables EmbeddingTables::create(ParamSet& params, const EmbeddingShape& shape, Rng& rng) {
  const EmbeddingDims& d = shape.dims;
  auto table = [&](const std::string& name, std::size_t rows, std::size_t width) {
    Tensor t({rows, width});
    for (double& v : t.storage()) v = rng.uniform(-0.1, 0.1);
    return params.add(name, std::move(t));
  };
  EmbeddingTables e;
  e.shape = shape;
  e.data_proj = Linear::create(params, "embed.data", shape.input_dim, d.data, rng);
  e.acc = table("embed.acc", shape.acc_vocab, d.acc);
  e.reg = table("embed.reg", shape.reg_vocab, d.reg);
  e.dow = table("embed.dow", 7, d.dow);
  e.tod = table("embed.tod", shape.steps_per_day, d.tod);
  {
    Tensor t({shape.window, shape.n_nodes, d.stae});
    for (double& v : t.storage()) v = rng.uniform(-0.1, 0.1);
    e.adaptive = params.add("embed.adaptive", std::move(t));
  }
  e.fuse = Linear::create(params, "embed.fuse", d.total(), shape.d_model, rng);
  return e;
}

namespace {

void check_ids(std::span<const int> ids, std::size_t vocab, std::size_t n_nodes, std::int64_t t0,
               const char* kind) {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw ValidationError(std::string(kind) + " id " + std::to_string(ids[i]) + " at (t=" +
                            std::to_string(t0 + static_cast<std::int64_t>(i / n_nodes)) +
                            ", n=" + std::to_string(i % n_nodes) + ") outside vocabulary of " +
                            std::to_string(vocab));
}

}  // namespace

Var embedding_blocks(std::span<const Var> bound, const EmbeddingTables& tables,
                     const CalendarIndexer& cal, const EmbeddingInputs& in) {
  const EmbeddingShape& s = tables.shape;
  const std::size_t steps = s.window;
  const std::size_t n = s.n_nodes;
  if (in.values.shape() != Shape{steps, n, s.input_dim})
    throw DimensionError("embedding input " + shape_string(in.values.shape()) + " vs expected " +
                         shape_string({steps, n, s.input_dim}));
  if (in.acc_ids.size() != steps * n || in.reg_ids.size() != steps * n)
    throw DimensionError("incident id arrays must hold T*N = " + std::to_string(steps * n) + " entries");
  if (cal.steps_per_day != static_cast<int>(s.steps_per_day))
    throw DimensionError("calendar has " + std::to_string(cal.steps_per_day) +
                         " steps per day, time-of-day table has " + std::to_string(s.steps_per_day));
  check_ids(in.acc_ids, s.acc_vocab, n, in.t0, "accident");
  check_ids(in.reg_ids, s.reg_vocab, n, in.t0, "regulation");

  Tape& tape = bound.front().tape();
  const Shape lead{steps, n};
  std::vector<int> dow(steps * n);
  std::vector<int> tod(steps * n);
  for (std::size_t t = 0; t < steps; ++t) {
    const TimeIndex ti = index_time(in.t0 + static_cast<std::int64_t>(t), cal);
    for (std::size_t i = 0; i < n; ++i) {
      dow[t * n + i] = ti.dow;
      tod[t * n + i] = ti.tod;
    }
  }
  const Var x = tape.constant(in.values);
  return concat_last_axis({
      tables.data_proj(bound, x),
      embedding_lookup(bound[tables.acc], in.acc_ids, lead),
      embedding_lookup(bound[tables.reg], in.reg_ids, lead),
      embedding_lookup(bound[tables.dow], dow, lead),
      embedding_lookup(bound[tables.tod], tod, lead),
      bound[tables.adaptive],
  });
}

Var embed_all(std::span<const Var> bound, const EmbeddingTables& tables, const CalendarIndexer& cal,
              const EmbeddingInputs& in) {
  return tables.fuse(bound, embedding_blocks(bound, tables, cal, in));
}

}  // namespace conformer
