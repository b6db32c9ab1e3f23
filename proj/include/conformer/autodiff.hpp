#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conformer/tensor.hpp"

namespace conformer {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Values are recorded in execution order; backward() walks
// them in reverse, calling each node's pullback with its output gradient.
//
// A tape built with record_gradients = false keeps only forward values, which
// is what evaluation uses. One tape belongs to one thread.
class Tape {
 public:
  // Pullback: receives the gradient w.r.t. the node output and the output
  // itself, and adds into the inputs' gradient buffers via grad_buffer().
  using Pullback = std::function<void(Tape&, const Tensor& grad, const Tensor& out)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);

  // Appends an op result. Throws NumericError when `value` holds NaN/Inf.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, Pullback pullback);
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, Pullback pullback);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Zero-initialized on first access.
  Tensor& grad_buffer(std::size_t id);
  // nullptr when nothing flowed into the node.
  const Tensor* grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and propagates. Loss must be a one-element tensor.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Pullback pullback;
  };

  std::deque<Node> nodes_;  // deque: values stay addressable while the tape grows
  bool recording_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

// Gradients of one loss w.r.t. an ordered parameter list. Entry i has the
// shape of parameter i; parameters the loss does not reach get zeros.
class GradientRecord {
 public:
  GradientRecord() = default;
  explicit GradientRecord(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

  std::size_t size() const { return grads_.size(); }
  const Tensor& operator[](std::size_t param) const { return grads_.at(param); }
  Tensor& operator[](std::size_t param) { return grads_.at(param); }

  // this += other, elementwise per parameter.
  void accumulate(const GradientRecord& other);
  void scale(double factor);
  double global_norm() const;

 private:
  std::vector<Tensor> grads_;
};

GradientRecord backward(Var loss, std::span<const Var> params);

// ---- differentiable primitives -------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
// x[..., d] + bias[d]
Var add_bias(Var x, Var bias);
// x[..., d] * gain[d]
Var mul_channels(Var x, Var gain);
// x[..., d] * s[..., 1]
Var mul_token(Var x, Var s);
Var matmul(Var a, Var b);
// x[..., in] * w[in, out] + b[out]; bias may be an invalid Var.
Var linear(Var x, Var weight, Var bias);
Var gelu(Var x);
Var softmax_last_axis(Var x);
// (x - mean) / sqrt(var + eps) over the last axis.
Var layer_normalize(Var x, double eps);
Var concat_last_axis(std::span<const Var> parts);
Var concat_last_axis(std::initializer_list<Var> parts);
Var slice_last_axis(Var x, std::size_t begin, std::size_t width);
Var swap_leading_axes(Var x);
Var reshape(Var x, Shape shape);
// Rows of table[V, D] picked by ids; result shape lead + {D}.
Var embedding_lookup(Var table, std::span<const int> ids, const Shape& lead);
Var sum(Var x);
// sum over entries with mask != 0 of |pred - target|.
Var masked_abs_sum(Var pred, const Tensor& target, std::span<const unsigned char> mask);

double gelu_value(double x);

}  // namespace conformer
