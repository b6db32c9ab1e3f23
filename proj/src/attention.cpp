#include "conformer/attention.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "conformer/errors.hpp"
#include "conformer/kernels.hpp"

namespace conformer {

AttentionParams AttentionParams::create(ParamSet& params, const std::string& name, const AttentionConfig& cfg,
                                        Rng& rng) {
  const std::size_t d = cfg.d_model();
  AttentionParams p;
  p.cfg = cfg;
  p.query = Linear::create(params, name + ".query", d, d, rng);
  p.key = Linear::create(params, name + ".key", d + cfg.cond_width, d, rng);
  p.value = Linear::create(params, name + ".value", d + cfg.cond_width, d, rng);
  p.fuse = Linear::create(params, name + ".fuse", 2 * d, d, rng);
  return p;
}

QKV conditional_qkv(Var x_gln, Var x_c, std::span<const Var> bound, const AttentionParams& p) {
  if (x_gln.value().last_dim() != p.cfg.d_model() || x_c.value().last_dim() != p.cfg.cond_width)
    throw DimensionError("conditional_qkv: inputs " + shape_string(x_gln.shape()) + " and " +
                         shape_string(x_c.shape()) + " do not match projection widths");
  const Var kv_in = concat_last_axis({x_gln, x_c});
  return {p.query(bound, x_gln), p.key(bound, kv_in), p.value(bound, kv_in)};
}

namespace {

enum class Axis { kTime, kNode };

// Multi-head softmax attention over one of the two leading axes of [T, N, D].
// Each (outer index, head) pair is an independent L x L problem with L the
// attended axis; head slices are gathered into contiguous buffers.
class AxisAttention {
 public:
  AxisAttention(const Shape& shape, std::size_t n_heads, Axis axis)
      : steps_(shape[0]), nodes_(shape[1]), d_(shape[2]), heads_(n_heads), axis_(axis) {
    if (n_heads == 0 || d_ % n_heads != 0)
      throw DimensionError("feature width " + std::to_string(d_) + " is not divisible into " +
                           std::to_string(n_heads) + " heads");
    dh_ = d_ / heads_;
    len_ = axis == Axis::kNode ? nodes_ : steps_;
    outer_ = axis == Axis::kNode ? steps_ : nodes_;
    scale_ = 1.0 / std::sqrt(static_cast<double>(dh_));
  }

  std::size_t problems() const { return outer_ * heads_; }
  std::size_t len() const { return len_; }
  std::size_t dh() const { return dh_; }
  double scale() const { return scale_; }

  // Flat offset of (outer o, position i, head h) in the [T, N, D] buffer.
  std::size_t offset(std::size_t o, std::size_t i, std::size_t h) const {
    const std::size_t row = axis_ == Axis::kNode ? o * nodes_ + i : i * nodes_ + o;
    return row * d_ + h * dh_;
  }

  void gather(const Tensor& x, std::size_t o, std::size_t h, double* dst) const {
    for (std::size_t i = 0; i < len_; ++i) std::copy_n(x.data().data() + offset(o, i, h), dh_, dst + i * dh_);
  }
  void scatter_add(const double* src, std::size_t o, std::size_t h, Tensor& x) const {
    for (std::size_t i = 0; i < len_; ++i) kernels::axpy(1.0, src + i * dh_, x.data().data() + offset(o, i, h), dh_);
  }

 private:
  std::size_t steps_, nodes_, d_, heads_, dh_ = 0, len_ = 0, outer_ = 0;
  Axis axis_;
  double scale_ = 1.0;
};

Var axis_attention(Var q, Var k, Var v, std::size_t n_heads, Axis axis) {
  if (q.value().rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape())
    throw DimensionError("attention needs equal [T, N, D] q/k/v, got " + shape_string(q.shape()) + ", " +
                         shape_string(k.shape()) + ", " + shape_string(v.shape()));
  auto geo = std::make_shared<const AxisAttention>(q.shape(), n_heads, axis);
  const std::size_t len = geo->len();
  const std::size_t dh = geo->dh();
  // Attention weights of every problem, kept for the pullback.
  auto probs = std::make_shared<std::vector<double>>(geo->problems() * len * len);

  Tensor out(q.shape());
  std::vector<double> qm(len * dh), km(len * dh), vm(len * dh), om(len * dh);
  const std::size_t heads = n_heads;
  for (std::size_t p = 0; p < geo->problems(); ++p) {
    const std::size_t o = p / heads;
    const std::size_t h = p % heads;
    geo->gather(q.value(), o, h, qm.data());
    geo->gather(k.value(), o, h, km.data());
    geo->gather(v.value(), o, h, vm.data());
    double* s = probs->data() + p * len * len;
    std::fill_n(s, len * len, 0.0);
    kernels::gemm_nt(len, len, dh, qm.data(), km.data(), s);
    for (std::size_t i = 0; i < len; ++i) {
      double* row = s + i * len;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, row[j] *= geo->scale());
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) total += (row[j] = std::exp(row[j] - mx));
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < len; ++j) row[j] *= inv;
    }
    std::fill(om.begin(), om.end(), 0.0);
    kernels::gemm_nn(len, dh, len, s, vm.data(), om.data());
    geo->scatter_add(om.data(), o, h, out);
  }

  const char* name = axis == Axis::kNode ? "spatial_attention" : "temporal_attention";
  return q.tape().record(name, std::move(out), {q, k, v},
                         [q, k, v, geo, probs, heads](Tape& t, const Tensor& g, const Tensor&) {
    const std::size_t len = geo->len();
    const std::size_t dh = geo->dh();
    const bool need_q = t.requires_grad(q);
    const bool need_k = t.requires_grad(k);
    const bool need_v = t.requires_grad(v);
    std::vector<double> qm(len * dh), km(len * dh), vm(len * dh), gm(len * dh);
    std::vector<double> dp(len * len), dq(len * dh), dk(len * dh), dv(len * dh);
    for (std::size_t p = 0; p < geo->problems(); ++p) {
      const std::size_t o = p / heads;
      const std::size_t h = p % heads;
      const double* s = probs->data() + p * len * len;
      geo->gather(g, o, h, gm.data());
      if (need_v) {
        // dV = P^T dO
        std::fill(dv.begin(), dv.end(), 0.0);
        kernels::gemm_tn(len, dh, len, s, gm.data(), dv.data());
        geo->scatter_add(dv.data(), o, h, t.grad_buffer(v.id()));
      }
      if (!need_q && !need_k) continue;
      geo->gather(t.value(v.id()), o, h, vm.data());
      // dP = dO V^T, then dS = P * (dP - rowsum(dP * P)) * scale
      std::fill(dp.begin(), dp.end(), 0.0);
      kernels::gemm_nt(len, len, dh, gm.data(), vm.data(), dp.data());
      for (std::size_t i = 0; i < len; ++i) {
        double* dr = dp.data() + i * len;
        const double* pr = s + i * len;
        const double inner = kernels::dot(dr, pr, len);
        for (std::size_t j = 0; j < len; ++j) dr[j] = pr[j] * (dr[j] - inner) * geo->scale();
      }
      if (need_q) {
        geo->gather(t.value(k.id()), o, h, km.data());
        std::fill(dq.begin(), dq.end(), 0.0);
        kernels::gemm_nn(len, dh, len, dp.data(), km.data(), dq.data());
        geo->scatter_add(dq.data(), o, h, t.grad_buffer(q.id()));
      }
      if (need_k) {
        geo->gather(t.value(q.id()), o, h, qm.data());
        std::fill(dk.begin(), dk.end(), 0.0);
        kernels::gemm_tn(len, dh, len, dp.data(), qm.data(), dk.data());
        geo->scatter_add(dk.data(), o, h, t.grad_buffer(k.id()));
      }
    }
  });
}

}  // namespace

Var spatial_attention(Var q, Var k, Var v, std::size_t n_heads) {
  return axis_attention(q, k, v, n_heads, Axis::kNode);
}

Var temporal_attention(Var q, Var k, Var v, std::size_t n_heads) {
  return axis_attention(q, k, v, n_heads, Axis::kTime);
}

Var fuse(Var x_sp, Var x_te, std::span<const Var> bound, const Linear& fuse_layer) {
  if (x_sp.shape() != x_te.shape())
    throw DimensionError("fuse: spatial " + shape_string(x_sp.shape()) + " vs temporal " +
                         shape_string(x_te.shape()));
  return fuse_layer(bound, concat_last_axis({x_sp, x_te}));
}

}  // namespace conformer
