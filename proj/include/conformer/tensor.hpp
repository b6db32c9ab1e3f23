#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace conformer {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles. Plain value type: copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor from(std::initializer_list<std::size_t> shape, std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  std::size_t last_dim() const { return shape_.empty() ? 0 : shape_.back(); }
  // Number of slices along the last axis.
  std::size_t rows() const { return last_dim() == 0 ? 0 : size() / last_dim(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Batched matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// Per-batch data offsets of a broadcast matmul, shared with its pullback.
struct MatmulPlan {
  std::size_t m = 0, n = 0, k = 0;
  Shape out_shape;
  struct Offsets {
    std::size_t a, b, out;
  };
  std::vector<Offsets> batches;
};
MatmulPlan plan_matmul(const Shape& a, const Shape& b);

Tensor softmax_last_axis(const Tensor& x);

struct MeanStd {
  Tensor mean;
  Tensor std;
};
// Population statistics over the last axis; std = sqrt(var + eps).
MeanStd mean_std_last_axis(const Tensor& x, double eps);

Tensor concat_last_axis(std::span<const Tensor> parts);
Tensor slice_last_axis(const Tensor& x, std::size_t begin, std::size_t width);

// Swap the two leading axes: [A, B, ...] -> [B, A, ...].
Tensor swap_leading_axes(const Tensor& x);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace conformer
