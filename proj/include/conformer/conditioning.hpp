#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "conformer/autodiff.hpp"
#include "conformer/graph.hpp"
#include "conformer/params.hpp"

namespace conformer {

// Per-token modulation: gamma, beta are [T, N, D_model]; alpha is [T, N, 1].
struct ConditionFactors {
  Var gamma;
  Var beta;
  Var alpha;
};

// Two-layer MLP from the condition width to 2*D_model + 1 outputs laid out
// as [delta_gamma | beta | alpha]. The output layer starts at zero, so a
// fresh generator yields gamma = 1, beta = 0, alpha = 0.
struct FactorGenerator {
  Linear hidden;
  Linear out;
  std::size_t d_model = 0;

  static FactorGenerator create(ParamSet& params, const std::string& name, std::size_t cond_width,
                                std::size_t d_model, Rng& rng);
};

// X^c: the hop-concatenated propagation of the layer input.
Var compute_condition(Var x_o, const PropagationOperator& op, int k_hops);

ConditionFactors generate_factors(Var x_c, std::span<const Var> bound, const FactorGenerator& gen);

// gamma * (x - mean) / std + beta, statistics over the feature axis.
Var gln(Var x, const ConditionFactors& f, double eps);

// x_in + alpha * branch_out, alpha broadcast over features.
Var modulated_residual(Var x_in, Var branch_out, Var alpha);

// Both sides of the expanded attention score under conditional normalization.
// With N_Q, N_K the per-row normalized q, k and Q' = g*N_Q + b, K' = g*N_K + b:
//   lhs = Q' K'^T
//   rhs = (g*N_Q)(g*N_K)^T + (g*N_Q) b^T + b (g*N_K)^T + b b^T
// The four rhs terms are returned separately as well.
struct ScoreExpansion {
  Tensor lhs;
  Tensor rhs;
  Tensor scale_term;    // (g*N_Q)(g*N_K)^T
  Tensor query_term;    // (g*N_Q) b^T, entry (i, j) = <g*N_Q[i], b>
  Tensor key_term;      // b (g*N_K)^T, entry (i, j) = <b, g*N_K[j]>
  Tensor shift_term;    // b b^T, entry (i, j) = <b, b>
};

// q: [L, D], k: [M, D], gamma/beta: [D].
ScoreExpansion expanded_score_identity(const Tensor& q, const Tensor& k, const Tensor& gamma,
                                       const Tensor& beta, double eps);

}  // namespace conformer
