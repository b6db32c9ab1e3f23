#include "conformer/metrics.hpp"

#include <cmath>

#include "conformer/errors.hpp"

namespace conformer {

void MetricAccumulator::add(double y, double y_hat) {
  if (y == 0.0) return;
  const double err = std::abs(y_hat - y);
  abs_ += err;
  sq_ += err * err;
  pct_ += err / std::abs(y);
  ++count_;
}

void MetricAccumulator::add(const Tensor& y, const Tensor& y_hat) {
  if (y.shape() != y_hat.shape())
    throw DimensionError("metrics: target " + shape_string(y.shape()) + " vs prediction " +
                         shape_string(y_hat.shape()));
  for (std::size_t i = 0; i < y.size(); ++i) add(y[i], y_hat[i]);
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  abs_ += other.abs_;
  sq_ += other.sq_;
  pct_ += other.pct_;
  count_ += other.count_;
}

std::optional<MaskedMetrics> MetricAccumulator::result() const {
  if (count_ == 0) return std::nullopt;
  const double n = static_cast<double>(count_);
  return MaskedMetrics{abs_ / n, std::sqrt(sq_ / n), 100.0 * pct_ / n, count_};
}

std::optional<MaskedMetrics> masked_metrics(const Tensor& y, const Tensor& y_hat) {
  MetricAccumulator acc;
  acc.add(y, y_hat);
  return acc.result();
}

}  // namespace conformer
