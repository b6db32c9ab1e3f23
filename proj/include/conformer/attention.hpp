#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "conformer/autodiff.hpp"
#include "conformer/params.hpp"

namespace conformer {

struct AttentionConfig {
  std::size_t n_heads = 4;
  std::size_t d_head = 8;
  std::size_t cond_width = 0;  // feature width of X^c

  std::size_t d_model() const { return n_heads * d_head; }
};

// Projections of one conditional attention block. Q reads only the
// normalized input; K and V read [X^(GLN) | X^c].
struct AttentionParams {
  AttentionConfig cfg;
  Linear query;
  Linear key;
  Linear value;
  Linear fuse;  // [X^(Sp) | X^(Te)] -> D_model

  static AttentionParams create(ParamSet& params, const std::string& name, const AttentionConfig& cfg, Rng& rng);
};

struct QKV {
  Var q;
  Var k;
  Var v;
};

QKV conditional_qkv(Var x_gln, Var x_c, std::span<const Var> bound, const AttentionParams& p);

// softmax(Q_t K_t^T / sqrt(d_head)) V_t over the node axis for every time step t.
Var spatial_attention(Var q, Var k, Var v, std::size_t n_heads);
// The same over the time axis for every node.
Var temporal_attention(Var q, Var k, Var v, std::size_t n_heads);

Var fuse(Var x_sp, Var x_te, std::span<const Var> bound, const Linear& fuse_layer);

}  // namespace conformer
