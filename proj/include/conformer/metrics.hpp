#pragma once

#include <cstddef>
#include <optional>

#include "conformer/tensor.hpp"

namespace conformer {

struct MaskedMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent
  std::size_t count = 0;
};

// Errors over entries with y != 0 only. nullopt when no entry qualifies.
std::optional<MaskedMetrics> masked_metrics(const Tensor& y, const Tensor& y_hat);

// Running sums for masked metrics over many windows.
class MetricAccumulator {
 public:
  void add(double y, double y_hat);
  // Shapes must match.
  void add(const Tensor& y, const Tensor& y_hat);
  void merge(const MetricAccumulator& other);
  std::optional<MaskedMetrics> result() const;
  std::size_t count() const { return count_; }

 private:
  double abs_ = 0.0;
  double sq_ = 0.0;
  double pct_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace conformer
