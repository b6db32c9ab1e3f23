#include "conformer/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "conformer/errors.hpp"
#include "conformer/kernels.hpp"

namespace conformer {

// ---- Tape ------------------------------------------------------------------

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant is non-finite " + shape_string(value.shape()));
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  if (!value.all_finite()) throw NumericError("leaf is non-finite " + shape_string(value.shape()));
  nodes_.push_back(Node{std::move(value), {}, false, recording_, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
                 Pullback pullback) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(pullback));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, Pullback pullback) {
  if (!value.all_finite())
    throw NumericError(std::string(op) + " produced a non-finite value " + shape_string(value.shape()));
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError(std::string(op) + ": input recorded on another tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  needs = needs && recording_;
  nodes_.push_back(Node{std::move(value), {}, false, needs, needs ? std::move(pullback) : Pullback{}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss recorded on another tape");
  if (loss.value().size() != 1)
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  if (!recording_) throw ContractError("backward on a tape that does not record gradients");
  grad_buffer(loss.id())[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.pullback) continue;
    n.pullback(*this, n.grad, n.value);
  }
}

// ---- GradientRecord --------------------------------------------------------

void GradientRecord::accumulate(const GradientRecord& other) {
  if (other.size() != size()) throw DimensionError("gradient records cover different parameter sets");
  for (std::size_t p = 0; p < size(); ++p) {
    if (grads_[p].shape() != other.grads_[p].shape())
      throw DimensionError("gradient shape mismatch for parameter " + std::to_string(p));
    kernels::axpy(1.0, other.grads_[p].data().data(), grads_[p].data().data(), grads_[p].size());
  }
}

void GradientRecord::scale(double factor) {
  for (Tensor& g : grads_)
    for (double& v : g.storage()) v *= factor;
}

double GradientRecord::global_norm() const {
  double s = 0.0;
  for (const Tensor& g : grads_) s += kernels::dot(g.data().data(), g.data().data(), g.size());
  return std::sqrt(s);
}

GradientRecord backward(Var loss, std::span<const Var> params) {
  Tape& tape = loss.tape();
  tape.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const Var& p : params) {
    const Tensor* g = tape.grad(p);
    grads.push_back(g ? *g : Tensor(p.shape()));
  }
  return GradientRecord(std::move(grads));
}

// ---- primitives --------------------------------------------------------------

namespace {

void require_same_shape(std::string_view op, const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
}

void add_into(Tape& tape, const Var& target, const Tensor& g, double factor = 1.0) {
  if (!tape.requires_grad(target)) return;
  Tensor& buf = tape.grad_buffer(target.id());
  kernels::axpy(factor, g.data().data(), buf.data().data(), g.size());
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  kernels::axpy(1.0, b.value().data().data(), out.data().data(), out.size());
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    add_into(t, a, g);
    add_into(t, b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  kernels::axpy(-1.0, b.value().data().data(), out.data().data(), out.size());
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    add_into(t, a, g);
    add_into(t, b, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id());
      const Tensor& bv = t.value(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b.id());
      const Tensor& av = t.value(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.storage()) v *= factor;
  return a.tape().record("scale", std::move(out), {a},
                         [a, factor](Tape& t, const Tensor& g, const Tensor&) { add_into(t, a, g, factor); });
}

Var add_scalar(Var a, double offset) {
  Tensor out = a.value();
  for (double& v : out.storage()) v += offset;
  return a.tape().record("add_scalar", std::move(out), {a},
                         [a](Tape& t, const Tensor& g, const Tensor&) { add_into(t, a, g); });
}

Var add_bias(Var x, Var bias) {
  const std::size_t d = x.value().last_dim();
  if (bias.value().size() != d)
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " vs input " +
                         shape_string(x.shape()));
  Tensor out = x.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bv[j];
  return x.tape().record("add_bias", std::move(out), {x, bias}, [x, bias, d](Tape& t, const Tensor& g, const Tensor&) {
    add_into(t, x, g);
    if (t.requires_grad(bias)) {
      Tensor& gb = t.grad_buffer(bias.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
    }
  });
}

Var mul_channels(Var x, Var gain) {
  const std::size_t d = x.value().last_dim();
  if (gain.value().size() != d)
    throw DimensionError("mul_channels: gain " + shape_string(gain.shape()) + " vs input " +
                         shape_string(x.shape()));
  Tensor out = x.value();
  const Tensor& gv = gain.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] *= gv[j];
  return x.tape().record("mul_channels", std::move(out), {x, gain}, [x, gain, d](Tape& t, const Tensor& g, const Tensor&) {
    if (t.requires_grad(x)) {
      Tensor& gx = t.grad_buffer(x.id());
      const Tensor& gv = t.value(gain.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r * d + j] * gv[j];
    }
    if (t.requires_grad(gain)) {
      Tensor& gg = t.grad_buffer(gain.id());
      const Tensor& xv = t.value(x.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xv[r * d + j];
    }
  });
}

Var mul_token(Var x, Var s) {
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  if (sv.last_dim() != 1 || sv.rows() != xv.rows() ||
      !std::equal(xv.shape().begin(), xv.shape().end() - 1, sv.shape().begin()))
    throw DimensionError("mul_token: scale " + shape_string(sv.shape()) + " does not broadcast over " +
                         shape_string(xv.shape()));
  const std::size_t d = xv.last_dim();
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] *= sv[r];
  return x.tape().record("mul_token", std::move(out), {x, s}, [x, s, d](Tape& t, const Tensor& g, const Tensor&) {
    if (t.requires_grad(x)) {
      Tensor& gx = t.grad_buffer(x.id());
      const Tensor& sv = t.value(s.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r * d + j] * sv[r];
    }
    if (t.requires_grad(s)) {
      Tensor& gs = t.grad_buffer(s.id());
      const Tensor& xv = t.value(x.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        gs[r] += kernels::dot(g.data().data() + r * d, xv.data().data() + r * d, d);
    }
  });
}

Var matmul(Var a, Var b) {
  auto plan = std::make_shared<const MatmulPlan>(plan_matmul(a.shape(), b.shape()));
  Tensor out = conformer::matmul(a.value(), b.value());
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b, plan](Tape& t, const Tensor& g, const Tensor&) {
    const auto [m, n, k] = std::tuple{plan->m, plan->n, plan->k};
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id());
      const Tensor& bv = t.value(b.id());
      for (const auto& off : plan->batches)
        kernels::gemm_nt(m, k, n, g.data().data() + off.out, bv.data().data() + off.b,
                         ga.data().data() + off.a);
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b.id());
      const Tensor& av = t.value(a.id());
      for (const auto& off : plan->batches)
        kernels::gemm_tn(k, n, m, av.data().data() + off.a, g.data().data() + off.out,
                         gb.data().data() + off.b);
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (wv.rank() != 2 || xv.last_dim() != wv.dim(0))
    throw DimensionError("linear: input " + shape_string(xv.shape()) + " vs weight " +
                         shape_string(wv.shape()));
  const std::size_t in = wv.dim(0);
  const std::size_t out_w = wv.dim(1);
  const std::size_t rows = xv.rows();
  const bool has_bias = bias.valid();
  if (has_bias && bias.value().size() != out_w)
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " vs weight " +
                         shape_string(wv.shape()));
  Shape out_shape = xv.shape();
  out_shape.back() = out_w;
  Tensor out(out_shape);
  if (has_bias) {
    const Tensor& bv = bias.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(bv.data().data(), out_w, out.data().data() + r * out_w);
  }
  kernels::gemm_nn(rows, out_w, in, xv.data().data(), wv.data().data(), out.data().data());

  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return x.tape().record("linear", std::move(out), inputs,
                         [x, weight, bias, has_bias, in, out_w, rows](Tape& t, const Tensor& g, const Tensor&) {
    if (t.requires_grad(x)) {
      Tensor& gx = t.grad_buffer(x.id());
      kernels::gemm_nt(rows, in, out_w, g.data().data(), t.value(weight.id()).data().data(),
                       gx.data().data());
    }
    if (t.requires_grad(weight)) {
      Tensor& gw = t.grad_buffer(weight.id());
      kernels::gemm_tn(in, out_w, rows, t.value(x.id()).data().data(), g.data().data(),
                       gw.data().data());
    }
    if (has_bias && t.requires_grad(bias)) {
      Tensor& gb = t.grad_buffer(bias.id());
      for (std::size_t r = 0; r < rows; ++r) kernels::axpy(1.0, g.data().data() + r * out_w, gb.data().data(), out_w);
    }
  });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.storage()) v = gelu_value(v);
  return x.tape().record("gelu", std::move(out), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    if (!t.requires_grad(x)) return;
    Tensor& gx = t.grad_buffer(x.id());
    const Tensor& xv = t.value(x.id());
    constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var softmax_last_axis(Var x) {
  Tensor out = conformer::softmax_last_axis(x.value());
  return x.tape().record("softmax", std::move(out), {x}, [x](Tape& t, const Tensor& g, const Tensor& p) {
    if (!t.requires_grad(x)) return;
    Tensor& gx = t.grad_buffer(x.id());
    const std::size_t d = p.last_dim();
    for (std::size_t r = 0; r < p.rows(); ++r) {
      const double* pr = p.data().data() + r * d;
      const double* gr = g.data().data() + r * d;
      const double s = kernels::dot(pr, gr, d);
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += pr[j] * (gr[j] - s);
    }
  });
}

Var layer_normalize(Var x, double eps) {
  MeanStd stats = mean_std_last_axis(x.value(), eps);
  const Tensor& xv = x.value();
  const std::size_t d = xv.last_dim();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (xv[r * d + j] - stats.mean[r]) / stats.std[r];
  auto inv_std = std::make_shared<Tensor>(std::move(stats.std));
  for (double& s : inv_std->storage()) s = 1.0 / s;
  return x.tape().record("layer_normalize", std::move(out), {x},
                         [x, inv_std, d](Tape& t, const Tensor& g, const Tensor& xhat) {
    if (!t.requires_grad(x)) return;
    // dx = inv_std * (g - mean(g) - xhat * mean(g * xhat))
    Tensor& gx = t.grad_buffer(x.id());
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double* gr = g.data().data() + r * d;
      const double* hr = xhat.data().data() + r * d;
      double gmean = 0.0;
      for (std::size_t j = 0; j < d; ++j) gmean += gr[j];
      gmean *= inv_d;
      const double ghmean = kernels::dot(gr, hr, d) * inv_d;
      const double is = (*inv_std)[r];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += is * (gr[j] - gmean - hr[j] * ghmean);
    }
  });
}

Var concat_last_axis(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const Var& p : parts) values.push_back(p.value());
  Tensor out = conformer::concat_last_axis(values);
  std::vector<Var> inputs(parts.begin(), parts.end());
  const std::size_t width = out.last_dim();
  return parts.front().tape().record("concat", std::move(out), parts,
                                     [inputs, width](Tape& t, const Tensor& g, const Tensor&) {
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const std::size_t w = t.value(p.id()).last_dim();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_buffer(p.id());
        for (std::size_t r = 0; r < g.rows(); ++r)
          kernels::axpy(1.0, g.data().data() + r * width + offset, gp.data().data() + r * w, w);
      }
      offset += w;
    }
  });
}

Var concat_last_axis(std::initializer_list<Var> parts) {
  return concat_last_axis(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_last_axis(Var x, std::size_t begin, std::size_t width) {
  Tensor out = conformer::slice_last_axis(x.value(), begin, width);
  const std::size_t d = x.value().last_dim();
  return x.tape().record("slice", std::move(out), {x}, [x, begin, width, d](Tape& t, const Tensor& g, const Tensor&) {
    if (!t.requires_grad(x)) return;
    Tensor& gx = t.grad_buffer(x.id());
    for (std::size_t r = 0; r < g.rows(); ++r)
      kernels::axpy(1.0, g.data().data() + r * width, gx.data().data() + r * d + begin, width);
  });
}

Var swap_leading_axes(Var x) {
  Tensor out = conformer::swap_leading_axes(x.value());
  return x.tape().record("swap_leading_axes", std::move(out), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    if (!t.requires_grad(x)) return;
    const Tensor back = conformer::swap_leading_axes(g);
    add_into(t, x, back);
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    if (!t.requires_grad(x)) return;
    Tensor& gx = t.grad_buffer(x.id());
    kernels::axpy(1.0, g.data().data(), gx.data().data(), g.size());
  });
}

Var embedding_lookup(Var table, std::span<const int> ids, const Shape& lead) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("embedding table must be rank 2, got " + shape_string(tv.shape()));
  if (shape_size(lead) != ids.size())
    throw DimensionError("embedding ids count " + std::to_string(ids.size()) + " vs lead shape " +
                         shape_string(lead));
  const std::size_t vocab = tv.dim(0);
  const std::size_t d = tv.dim(1);
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw ValidationError("embedding id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(vocab));
  Shape out_shape = lead;
  out_shape.push_back(d);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.data().data() + static_cast<std::size_t>(ids[i]) * d, d, out.data().data() + i * d);
  std::vector<int> kept(ids.begin(), ids.end());
  return table.tape().record("embedding", std::move(out), {table},
                             [table, kept = std::move(kept), d](Tape& t, const Tensor& g, const Tensor&) {
    if (!t.requires_grad(table)) return;
    Tensor& gt = t.grad_buffer(table.id());
    for (std::size_t i = 0; i < kept.size(); ++i)
      kernels::axpy(1.0, g.data().data() + i * d, gt.data().data() + static_cast<std::size_t>(kept[i]) * d, d);
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record("sum", Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    if (!t.requires_grad(x)) return;
    Tensor& gx = t.grad_buffer(x.id());
    for (double& v : gx.storage()) v += g[0];
  });
}

Var masked_abs_sum(Var pred, const Tensor& target, std::span<const unsigned char> mask) {
  const Tensor& pv = pred.value();
  if (pv.size() != target.size() || mask.size() != target.size())
    throw DimensionError("masked_abs_sum: prediction " + shape_string(pv.shape()) + " vs target " +
                         shape_string(target.shape()));
  auto signs = std::make_shared<std::vector<double>>(pv.size(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (!mask[i]) continue;
    const double diff = pv[i] - target[i];
    s += std::abs(diff);
    (*signs)[i] = diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0;
  }
  return pred.tape().record("masked_abs_sum", Tensor::scalar(s), {pred},
                            [pred, signs](Tape& t, const Tensor& g, const Tensor&) {
    if (!t.requires_grad(pred)) return;
    Tensor& gp = t.grad_buffer(pred.id());
    kernels::axpy(g[0], signs->data(), gp.data().data(), gp.size());
  });
}

}  // namespace conformer
