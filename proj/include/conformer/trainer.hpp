#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "conformer/data.hpp"
#include "conformer/metrics.hpp"
#include "conformer/model.hpp"

namespace conformer {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;  // 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Training windows drawn per epoch; 0 uses every window.
  std::size_t windows_per_epoch = 0;
  bool per_node_norm = false;

  // Throws ConfigError on out-of-range values.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

class Adam {
 public:
  Adam(const ParamSet& params, const TrainConfig& cfg);
  // One update with already averaged (and clipped) gradients.
  void step(ParamSet& params, const GradientRecord& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Rescales grads so the global norm is at most max_norm; returns the norm before clipping.
double clip_global_norm(GradientRecord& grads, double max_norm);

// Patience counter over validation scores (lower is better).
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  // Records the score of the next epoch; true when it is a new best.
  bool update(double score);
  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_score() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_mae = 0.0;
  double val_mae = 0.0;
};

struct TrainResult {
  ParamSet best_params;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  NormalizationStats stats;
  ModelConfig model_config;  // resolved against the dataset
};

// Masked absolute-error sum in original units for one window, with gradients.
struct WindowLoss {
  double abs_sum = 0.0;
  std::size_t count = 0;
  GradientRecord grads;
};

WindowLoss window_loss(const ConFormer& model, const DatasetBundle& bundle, const NormalizationStats& stats,
                       std::size_t t0, const ForwardOptions& opts);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam on masked MAE with early stopping on validation MAE. Returns the
// parameters of the best validation epoch.
TrainResult train(const DatasetBundle& bundle, const ModelConfig& cfg, const TrainConfig& tcfg,
                  const EpochCallback& on_epoch = {});

// Model forecast for the window starting at t0 in original units, [T', N, 1].
Tensor forecast(const ConFormer& model, const DatasetBundle& bundle, const NormalizationStats& stats,
                std::size_t t0);

// Last nonzero observation per node, repeated over the horizon, [T', N, 1].
Tensor historical_inertia(const DatasetBundle& bundle, std::size_t t0, std::size_t input_len, std::size_t horizon);

struct HorizonMetrics {
  std::size_t horizon = 0;  // 1-based step ahead
  std::optional<MaskedMetrics> metrics;
};

struct EvaluationTable {
  std::vector<HorizonMetrics> rows;
  std::optional<MaskedMetrics> average;  // over every horizon 1..T'
};

using Predictor = std::function<Tensor(std::size_t t0)>;

// Throws ConfigError for horizons outside [1, T'].
void check_horizons(std::span<const std::size_t> horizons, std::size_t max_horizon);

// Masked metrics per requested horizon plus the all-horizon average over the
// windows of `split`. Optional `node_mask` restricts scoring to (window, node)
// pairs for which it returns true.
EvaluationTable evaluate_predictor(const DatasetBundle& bundle, IndexRange split, std::size_t input_len,
                                   std::size_t horizon, std::span<const std::size_t> horizons,
                                   const Predictor& predict,
                                   const std::function<bool(std::size_t t0, std::size_t node)>& node_mask = {});

EvaluationTable evaluate(const ConFormer& model, const NormalizationStats& stats, const DatasetBundle& bundle,
                         IndexRange split, std::span<const std::size_t> horizons);

}  // namespace conformer
