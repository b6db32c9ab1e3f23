#include "conformer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "conformer/errors.hpp"
#include "conformer/parallel.hpp"

namespace conformer {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam moment coefficients must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
}

Adam::Adam(const ParamSet& params, const TrainConfig& cfg)
    : lr_(cfg.learning_rate), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.value(i).shape());
    v_.emplace_back(params.value(i).shape());
  }
}

void Adam::step(ParamSet& params, const GradientRecord& grads) {
  if (grads.size() != params.size())
    throw DimensionError("Adam: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = params.value(p);
    const Tensor& g = grads[p];
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double clip_global_norm(GradientRecord& grads, double max_norm) {
  const double norm = grads.global_norm();
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(double score) {
  ++epoch_;
  if (best_epoch_ == 0 || score < best_) {
    best_ = score;
    best_epoch_ = epoch_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

namespace {

std::vector<unsigned char> nonzero_mask(const Tensor& y) {
  std::vector<unsigned char> mask(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) mask[i] = y[i] != 0.0;
  return mask;
}

// Per-cell (std, mean) tensors that map normalized predictions back to original units.
std::pair<Tensor, Tensor> denorm_tensors(const NormalizationStats& stats, std::size_t horizon, std::size_t n) {
  Tensor sd({horizon, n, 1}), mu({horizon, n, 1});
  for (std::size_t h = 0; h < horizon; ++h)
    for (std::size_t node = 0; node < n; ++node) {
      sd[h * n + node] = stats.std_of(node);
      mu[h * n + node] = stats.mean_of(node);
    }
  return {std::move(sd), std::move(mu)};
}

}  // namespace

WindowLoss window_loss(const ConFormer& model, const DatasetBundle& bundle, const NormalizationStats& stats,
                       std::size_t t0, const ForwardOptions& opts) {
  const ModelConfig& cfg = model.config();
  const WindowInput in = window_input(bundle, stats, t0, cfg.input_len);
  const Tensor target = window_target(bundle, t0, cfg.input_len, cfg.horizon);
  const std::vector<unsigned char> mask = nonzero_mask(target);

  Tape tape;
  const std::vector<Var> bound = model.params().bind(tape);
  const Var pred = model.forward(bound, in, opts);
  auto [sd, mu] = denorm_tensors(stats, cfg.horizon, cfg.n_nodes);
  const Var real = add(mul(pred, tape.constant(std::move(sd))), tape.constant(std::move(mu)));
  const Var loss = masked_abs_sum(real, target, mask);

  WindowLoss out;
  out.abs_sum = loss.value()[0];
  out.count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  out.grads = backward(loss, bound);
  return out;
}

Tensor forecast(const ConFormer& model, const DatasetBundle& bundle, const NormalizationStats& stats,
                std::size_t t0) {
  const ModelConfig& cfg = model.config();
  Tensor z = model.predict(window_input(bundle, stats, t0, cfg.input_len));
  const std::size_t n = cfg.n_nodes;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = stats.invert(z[i], i % n);
  return z;
}

Tensor historical_inertia(const DatasetBundle& bundle, std::size_t t0, std::size_t input_len, std::size_t horizon) {
  const std::size_t n = bundle.nodes();
  if (t0 + input_len > bundle.steps()) throw DimensionError("historical_inertia: window exceeds dataset");
  Tensor y({horizon, n, 1});
  for (std::size_t node = 0; node < n; ++node) {
    double last = 0.0;
    // Latest nonzero reading at or before the window end.
    for (std::size_t t = t0 + input_len; t-- > 0;)
      if (const double v = bundle.value(t, node); v != 0.0) {
        last = v;
        break;
      }
    for (std::size_t h = 0; h < horizon; ++h) y[h * n + node] = last;
  }
  return y;
}

void check_horizons(std::span<const std::size_t> horizons, std::size_t max_horizon) {
  for (std::size_t h : horizons)
    if (h < 1 || h > max_horizon)
      throw ConfigError("horizon " + std::to_string(h) + " outside [1, " + std::to_string(max_horizon) + "]");
}

EvaluationTable evaluate_predictor(const DatasetBundle& bundle, IndexRange split, std::size_t input_len,
                                   std::size_t horizon, std::span<const std::size_t> horizons,
                                   const Predictor& predict,
                                   const std::function<bool(std::size_t, std::size_t)>& node_mask) {
  check_horizons(horizons, horizon);
  const std::vector<std::size_t> starts = make_windows(split, input_len, horizon);
  const std::size_t n = bundle.nodes();

  // One accumulator per (window, horizon step); merged in window order so the
  // result does not depend on the worker count.
  std::vector<MetricAccumulator> per(starts.size() * horizon);
  parallel_for(starts.size(), [&](std::size_t w) {
    const std::size_t t0 = starts[w];
    const Tensor y_hat = predict(t0);
    const Tensor y = window_target(bundle, t0, input_len, horizon);
    if (y_hat.shape() != y.shape())
      throw DimensionError("predictor returned " + shape_string(y_hat.shape()) + ", expected " +
                           shape_string(y.shape()));
    for (std::size_t node = 0; node < n; ++node) {
      if (node_mask && !node_mask(t0, node)) continue;
      for (std::size_t h = 0; h < horizon; ++h) per[w * horizon + h].add(y[h * n + node], y_hat[h * n + node]);
    }
  });

  std::vector<MetricAccumulator> by_h(horizon);
  MetricAccumulator all;
  for (std::size_t w = 0; w < starts.size(); ++w)
    for (std::size_t h = 0; h < horizon; ++h) {
      by_h[h].merge(per[w * horizon + h]);
      all.merge(per[w * horizon + h]);
    }
  EvaluationTable table;
  for (std::size_t h : horizons) table.rows.push_back({h, by_h[h - 1].result()});
  table.average = all.result();
  return table;
}

EvaluationTable evaluate(const ConFormer& model, const NormalizationStats& stats, const DatasetBundle& bundle,
                         IndexRange split, std::span<const std::size_t> horizons) {
  const ModelConfig& cfg = model.config();
  if (cfg.n_nodes != bundle.nodes())
    throw DimensionError("model expects " + std::to_string(cfg.n_nodes) + " nodes, dataset has " +
                         std::to_string(bundle.nodes()));
  return evaluate_predictor(bundle, split, cfg.input_len, cfg.horizon, horizons,
                            [&](std::size_t t0) { return forecast(model, bundle, stats, t0); });
}

namespace {

double validation_mae(const ConFormer& model, const NormalizationStats& stats, const DatasetBundle& bundle,
                      IndexRange val) {
  const EvaluationTable t = evaluate(model, stats, bundle, val, {});
  return t.average ? t.average->mae : std::numeric_limits<double>::infinity();
}

}  // namespace

TrainResult train(const DatasetBundle& bundle, const ModelConfig& model_cfg, const TrainConfig& tcfg,
                  const EpochCallback& on_epoch) {
  tcfg.validate();
  bundle.validate();
  const ModelConfig cfg = resolve_model_config(model_cfg, bundle);
  cfg.validate();

  const SplitSpec split = SplitSpec::chronological(bundle.steps());
  const std::vector<std::size_t> train_windows = make_windows(split.train, cfg.input_len, cfg.horizon);
  if (train_windows.empty()) throw ConfigError("training split holds no complete window");
  if (make_windows(split.val, cfg.input_len, cfg.horizon).empty())
    throw ConfigError("validation split holds no complete window");

  TrainResult result;
  result.model_config = cfg;
  result.stats = NormalizationStats::fit(bundle, split.train, tcfg.per_node_norm);
  ConFormer model(cfg, bundle.graph, bundle.calendar(), tcfg.seed);
  Adam adam(model.params(), tcfg);
  EarlyStopping stopper(tcfg.patience);
  result.best_params = model.params();

  std::vector<std::size_t> order = train_windows;
  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    order = train_windows;
    Rng shuffle(derive_seed(tcfg.seed, 0x5EED, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    if (tcfg.windows_per_epoch > 0 && tcfg.windows_per_epoch < order.size()) order.resize(tcfg.windows_per_epoch);

    double epoch_abs = 0.0;
    std::size_t epoch_count = 0;
    const std::size_t n_batches = (order.size() + tcfg.batch_size - 1) / tcfg.batch_size;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t lo = b * tcfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + tcfg.batch_size);
      std::vector<WindowLoss> losses(hi - lo);
      try {
        parallel_for(hi - lo, [&](std::size_t i) {
          const std::size_t t0 = order[lo + i];
          losses[i] = window_loss(model, bundle, result.stats, t0,
                                  {true, derive_seed(tcfg.seed, epoch, t0)});
        });
      } catch (const NumericError& e) {
        throw NumericError("non-finite value at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b + 1) + ": " + e.what());
      }
      double abs_sum = 0.0;
      std::size_t count = 0;
      GradientRecord grads = std::move(losses[0].grads);
      abs_sum += losses[0].abs_sum;
      count += losses[0].count;
      for (std::size_t i = 1; i < losses.size(); ++i) {
        grads.accumulate(losses[i].grads);
        abs_sum += losses[i].abs_sum;
        count += losses[i].count;
      }
      if (!std::isfinite(abs_sum))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1));
      if (count == 0) continue;
      epoch_abs += abs_sum;
      epoch_count += count;
      grads.scale(1.0 / static_cast<double>(count));
      if (!std::isfinite(clip_global_norm(grads, tcfg.clip_norm)))
        throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b + 1));
      adam.step(model.params(), grads);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mae = epoch_count > 0 ? epoch_abs / static_cast<double>(epoch_count) : 0.0;
    rec.val_mae = validation_mae(model, result.stats, bundle, split.val);
    result.history.push_back(rec);
    if (stopper.update(rec.val_mae)) {
      result.best_params = model.params();
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
    if (stopper.should_stop()) break;
  }
  return result;
}

}  // namespace conformer
