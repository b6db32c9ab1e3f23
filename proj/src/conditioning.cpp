#include "conformer/conditioning.hpp"

#include "conformer/errors.hpp"
#include "conformer/kernels.hpp"

namespace conformer {

FactorGenerator FactorGenerator::create(ParamSet& params, const std::string& name, std::size_t cond_width,
                                        std::size_t d_model, Rng& rng) {
  FactorGenerator g;
  g.hidden = Linear::create(params, name + ".hidden", cond_width, d_model, rng);
  g.out = Linear::zeros(params, name + ".out", d_model, 2 * d_model + 1);
  g.d_model = d_model;
  return g;
}

Var compute_condition(Var x_o, const PropagationOperator& op, int k_hops) {
  return propagate(x_o, op, k_hops);
}

ConditionFactors generate_factors(Var x_c, std::span<const Var> bound, const FactorGenerator& gen) {
  if (x_c.value().last_dim() != gen.hidden.in)
    throw DimensionError("factor generator expects condition width " + std::to_string(gen.hidden.in) +
                         ", got " + shape_string(x_c.shape()));
  const Var raw = gen.out(bound, gelu(gen.hidden(bound, x_c)));
  const std::size_t d = gen.d_model;
  return {add_scalar(slice_last_axis(raw, 0, d), 1.0), slice_last_axis(raw, d, d),
          slice_last_axis(raw, 2 * d, 1)};
}

Var gln(Var x, const ConditionFactors& f, double eps) {
  return add(mul(layer_normalize(x, eps), f.gamma), f.beta);
}

Var modulated_residual(Var x_in, Var branch_out, Var alpha) {
  if (x_in.shape() != branch_out.shape())
    throw DimensionError("residual input " + shape_string(x_in.shape()) + " vs branch " +
                         shape_string(branch_out.shape()));
  return add(x_in, mul_token(branch_out, alpha));
}

namespace {

// g * (x - mean) / std, row by row.
Tensor scaled_normalized(const Tensor& x, const Tensor& gamma, double eps) {
  const MeanStd stats = mean_std_last_axis(x, eps);
  const std::size_t d = x.last_dim();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j)
      out[r * d + j] = gamma[j] * (x[r * d + j] - stats.mean[r]) / stats.std[r];
  return out;
}

}  // namespace

ScoreExpansion expanded_score_identity(const Tensor& q, const Tensor& k, const Tensor& gamma,
                                       const Tensor& beta, double eps) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1))
    throw DimensionError("score expansion needs q [L, D] and k [M, D], got " + shape_string(q.shape()) +
                         " and " + shape_string(k.shape()));
  const std::size_t d = q.dim(1);
  if (gamma.size() != d || beta.size() != d)
    throw DimensionError("gamma/beta must have " + std::to_string(d) + " entries");
  const std::size_t l = q.dim(0);
  const std::size_t m = k.dim(0);

  const Tensor gq = scaled_normalized(q, gamma, eps);
  const Tensor gk = scaled_normalized(k, gamma, eps);
  Tensor q_prime = gq;
  Tensor k_prime = gk;
  for (std::size_t r = 0; r < l; ++r) kernels::axpy(1.0, beta.data().data(), q_prime.data().data() + r * d, d);
  for (std::size_t r = 0; r < m; ++r) kernels::axpy(1.0, beta.data().data(), k_prime.data().data() + r * d, d);

  ScoreExpansion e{Tensor({l, m}), Tensor({l, m}), Tensor({l, m}), Tensor({l, m}), Tensor({l, m}), Tensor({l, m})};
  kernels::gemm_nt(l, m, d, q_prime.data().data(), k_prime.data().data(), e.lhs.data().data());
  kernels::gemm_nt(l, m, d, gq.data().data(), gk.data().data(), e.scale_term.data().data());
  const double bb = kernels::dot(beta.data().data(), beta.data().data(), d);
  for (std::size_t i = 0; i < l; ++i) {
    const double qb = kernels::dot(gq.data().data() + i * d, beta.data().data(), d);
    for (std::size_t j = 0; j < m; ++j) {
      const double kb = kernels::dot(beta.data().data(), gk.data().data() + j * d, d);
      e.query_term.at(i, j) = qb;
      e.key_term.at(i, j) = kb;
      e.shift_term.at(i, j) = bb;
      e.rhs.at(i, j) = e.scale_term.at(i, j) + qb + kb + bb;
    }
  }
  return e;
}

}  // namespace conformer
