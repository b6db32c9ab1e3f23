#include "conformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "conformer/errors.hpp"
#include "conformer/kernels.hpp"

namespace conformer {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (std::size_t d : shape_)
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_)
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
  if (shape_size(shape_) != data_.size())
    throw DimensionError("shape " + shape_string(shape_) + " holds " +
                         std::to_string(shape_size(shape_)) + " values, data has " +
                         std::to_string(data_.size()));
}

Tensor Tensor::from(std::initializer_list<std::size_t> shape, std::initializer_list<double> values) {
  return Tensor(Shape(shape), std::vector<double>(values));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size())
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

// Row-major strides of the batch part of `shape` (all but the last two axes),
// right-aligned against `rank` batch axes; broadcast axes get stride 0.
std::vector<std::size_t> batch_strides(const Shape& shape, std::size_t rank) {
  const std::size_t own = shape.size() - 2;
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = shape[shape.size() - 1] * shape[shape.size() - 2];
  for (std::size_t i = 0; i < own; ++i) {
    const std::size_t axis = own - 1 - i;
    const std::size_t out_axis = rank - 1 - i;
    strides[out_axis] = shape[axis] == 1 ? 0 : stride;
    stride *= shape[axis];
  }
  return strides;
}

}  // namespace

MatmulPlan plan_matmul(const Shape& a, const Shape& b) {
  if (a.size() < 2 || b.size() < 2)
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_string(a) + " and " +
                         shape_string(b));
  MatmulPlan plan;
  plan.m = a[a.size() - 2];
  plan.k = a[a.size() - 1];
  plan.n = b[b.size() - 1];
  if (b[b.size() - 2] != plan.k)
    throw DimensionError("matmul inner dimensions differ: " + shape_string(a) + " x " +
                         shape_string(b));

  const std::size_t batch_rank = std::max(a.size(), b.size()) - 2;
  Shape& out_shape = plan.out_shape;
  out_shape.resize(batch_rank);
  for (std::size_t i = 0; i < batch_rank; ++i) {
    const auto extent = [&](const Shape& s) -> std::size_t {
      const std::size_t own = s.size() - 2;
      return i + own >= batch_rank ? s[i + own - batch_rank] : 1;
    };
    const std::size_t ea = extent(a);
    const std::size_t eb = extent(b);
    if (ea != eb && ea != 1 && eb != 1)
      throw DimensionError("matmul batch dimensions do not broadcast: " + shape_string(a) + " x " +
                           shape_string(b));
    out_shape[i] = std::max(ea, eb);
  }
  const std::size_t batches = shape_size(out_shape);
  out_shape.push_back(plan.m);
  out_shape.push_back(plan.n);

  const auto sa = batch_strides(a, batch_rank);
  const auto sb = batch_strides(b, batch_rank);
  std::vector<std::size_t> index(batch_rank, 0);
  plan.batches.reserve(batches);
  for (std::size_t bi = 0; bi < batches; ++bi) {
    MatmulPlan::Offsets off{0, 0, bi * plan.m * plan.n};
    for (std::size_t d = 0; d < batch_rank; ++d) {
      off.a += index[d] * sa[d];
      off.b += index[d] * sb[d];
    }
    plan.batches.push_back(off);
    for (std::size_t d = batch_rank; d-- > 0;) {
      if (++index[d] < out_shape[d]) break;
      index[d] = 0;
    }
  }
  return plan;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulPlan plan = plan_matmul(a.shape(), b.shape());
  Tensor out(plan.out_shape);
  for (const auto& off : plan.batches)
    kernels::gemm_nn(plan.m, plan.n, plan.k, a.data().data() + off.a, b.data().data() + off.b,
                     out.data().data() + off.out);
  return out;
}

Tensor softmax_last_axis(const Tensor& x) {
  if (x.rank() == 0 || x.last_dim() == 0) throw DimensionError("softmax over an empty last axis");
  Tensor out(x.shape());
  const std::size_t d = x.last_dim();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* in = x.data().data() + r * d;
    double* o = out.data().data() + r * d;
    const double mx = *std::max_element(in, in + d);
    double sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) sum += (o[j] = std::exp(in[j] - mx));
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < d; ++j) o[j] *= inv;
  }
  return out;
}

MeanStd mean_std_last_axis(const Tensor& x, double eps) {
  if (x.rank() == 0 || x.last_dim() == 0) throw DimensionError("mean/std over an empty last axis");
  if (!(eps > 0.0)) throw ContractError("mean_std_last_axis requires eps > 0");
  Shape reduced = x.shape();
  reduced.back() = 1;
  MeanStd result{Tensor(reduced), Tensor(reduced)};
  const std::size_t d = x.last_dim();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* in = x.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    result.mean[r] = mean;
    result.std[r] = std::sqrt(var + eps);
  }
  return result;
}

Tensor concat_last_axis(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& lead = parts.front().shape();
  std::size_t width = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != lead.size() || !std::equal(lead.begin(), lead.end() - 1, p.shape().begin()))
      throw DimensionError("concat leading shapes differ: " + shape_string(lead) + " vs " +
                           shape_string(p.shape()));
    width += p.last_dim();
  }
  Shape out_shape = lead;
  out_shape.back() = width;
  Tensor out(out_shape);
  const std::size_t rows = parts.front().rows();
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.last_dim();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.data().data() + r * w, w, out.data().data() + r * width + offset);
    offset += w;
  }
  return out;
}

Tensor slice_last_axis(const Tensor& x, std::size_t begin, std::size_t width) {
  if (width == 0 || begin + width > x.last_dim())
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(begin + width) +
                         ") outside last axis of " + shape_string(x.shape()));
  Shape out_shape = x.shape();
  out_shape.back() = width;
  Tensor out(out_shape);
  const std::size_t d = x.last_dim();
  for (std::size_t r = 0; r < x.rows(); ++r)
    std::copy_n(x.data().data() + r * d + begin, width, out.data().data() + r * width);
  return out;
}

Tensor swap_leading_axes(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("swap_leading_axes needs rank >= 2");
  const std::size_t a = x.dim(0);
  const std::size_t b = x.dim(1);
  const std::size_t inner = x.size() / (a * b);
  Shape out_shape = x.shape();
  std::swap(out_shape[0], out_shape[1]);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      std::copy_n(x.data().data() + (i * b + j) * inner, inner,
                  out.data().data() + (j * a + i) * inner);
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("cannot compare " + shape_string(a.shape()) + " with " +
                         shape_string(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace conformer
