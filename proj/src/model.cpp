#include "conformer/model.hpp"

#include <array>

#include "conformer/errors.hpp"

namespace conformer {

namespace {

constexpr std::array<Ablation, 8> kAblations{
    Ablation::kNoAccident, Ablation::kNoRegulation, Ablation::kNoAlpha,   Ablation::kNoBeta,
    Ablation::kNoGamma,    Ablation::kNoSpatial,    Ablation::kNoTemporal, Ablation::kPlainLayerNorm,
};

}  // namespace

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kNoAccident: return "no-accident";
    case Ablation::kNoRegulation: return "no-regulation";
    case Ablation::kNoAlpha: return "no-alpha";
    case Ablation::kNoBeta: return "no-beta";
    case Ablation::kNoGamma: return "no-gamma";
    case Ablation::kNoSpatial: return "no-spatial";
    case Ablation::kNoTemporal: return "no-temporal";
    case Ablation::kPlainLayerNorm: return "plain-ln";
  }
  return "?";
}

Ablation parse_ablation(std::string_view name) {
  for (Ablation a : kAblations)
    if (ablation_name(a) == name) return a;
  throw ConfigError("unknown ablation '" + std::string(name) + "'");
}

std::span<const Ablation> all_ablations() { return kAblations; }

void ModelConfig::validate() const {
  if (input_len == 0 || horizon == 0 || n_nodes == 0 || input_dim == 0)
    throw ConfigError("input_len, horizon, n_nodes and input_dim must be >= 1");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be a positive multiple of n_heads (" +
                      std::to_string(n_heads) + ")");
  if (hops < 0) throw ConfigError("hops must be >= 0");
  if (n_layers == 0) throw ConfigError("n_layers must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (steps_per_day == 0 || acc_vocab == 0 || reg_vocab == 0)
    throw ConfigError("steps_per_day and vocabularies must be >= 1");
  if (dims.data == 0 || dims.acc == 0 || dims.reg == 0 || dims.dow == 0 || dims.tod == 0 || dims.stae == 0)
    throw ConfigError("embedding dimensions must be >= 1");
}

ConFormer::ConFormer(ModelConfig cfg, const GraphSpec& graph, const CalendarIndexer& calendar,
                     std::uint64_t seed)
    : cfg_(std::move(cfg)), calendar_(calendar) {
  cfg_.validate();
  if (graph.n_nodes != cfg_.n_nodes)
    throw DimensionError("graph has " + std::to_string(graph.n_nodes) + " nodes, config expects " +
                         std::to_string(cfg_.n_nodes));
  op_ = normalize_adjacency(graph, cfg_.self_loops);
  Rng rng(seed);
  build_layout(params_, rng);
}

ConFormer::ConFormer(ModelConfig cfg, const GraphSpec& graph, const CalendarIndexer& calendar,
                     const ParamSet& params)
    : ConFormer(std::move(cfg), graph, calendar, std::uint64_t{0}) {
  if (params.size() != params_.size())
    throw DimensionError("parameter set has " + std::to_string(params.size()) + " arrays, layout needs " +
                         std::to_string(params_.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.name(i) != params_.name(i) || params.value(i).shape() != params_.value(i).shape())
      throw DimensionError("parameter " + std::to_string(i) + " is " + params.name(i) +
                           shape_string(params.value(i).shape()) + ", layout expects " + params_.name(i) +
                           shape_string(params_.value(i).shape()));
    params_.value(i) = params.value(i);
  }
}

void ConFormer::build_layout(ParamSet& params, Rng& rng) {
  EmbeddingShape es;
  es.window = cfg_.input_len;
  es.n_nodes = cfg_.n_nodes;
  es.input_dim = cfg_.input_dim;
  es.d_model = cfg_.d_model;
  es.steps_per_day = cfg_.steps_per_day;
  es.acc_vocab = cfg_.acc_vocab;
  es.reg_vocab = cfg_.reg_vocab;
  es.dims = cfg_.dims;
  embed_ = EmbeddingTables::create(params, es, rng);

  const std::size_t d = cfg_.d_model;
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    LayerParams lp;
    lp.attn_factors = FactorGenerator::create(params, prefix + ".factors_c", cfg_.cond_width(), d, rng);
    lp.ff_factors = FactorGenerator::create(params, prefix + ".factors_f", cfg_.cond_width(), d, rng);
    lp.attention = AttentionParams::create(params, prefix + ".attention",
                                           {cfg_.n_heads, d / cfg_.n_heads, cfg_.cond_width()}, rng);
    lp.ff_in = Linear::create(params, prefix + ".ff_in", d, 4 * d, rng);
    lp.ff_out = Linear::create(params, prefix + ".ff_out", 4 * d, d, rng);
    if (cfg_.has(Ablation::kPlainLayerNorm)) {
      lp.ln1_gain = params.add(prefix + ".ln1.gain", Tensor({d}, 1.0));
      lp.ln1_bias = params.add(prefix + ".ln1.bias", Tensor({d}));
      lp.ln2_gain = params.add(prefix + ".ln2.gain", Tensor({d}, 1.0));
      lp.ln2_bias = params.add(prefix + ".ln2.bias", Tensor({d}));
    }
    layers_.push_back(lp);
  }
  readout_ = Linear::create(params, "readout", cfg_.input_len * d, cfg_.horizon, rng);
}

Var ConFormer::embed(std::span<const Var> bound, const WindowInput& in) const {
  const std::size_t cells = cfg_.input_len * cfg_.n_nodes;
  std::vector<int> none;
  std::span<const int> acc = in.acc_ids;
  std::span<const int> reg = in.reg_ids;
  if (cfg_.has(Ablation::kNoAccident) || cfg_.has(Ablation::kNoRegulation)) none.assign(cells, 0);
  if (cfg_.has(Ablation::kNoAccident)) acc = none;
  if (cfg_.has(Ablation::kNoRegulation)) reg = none;
  return embed_all(bound, embed_, calendar_, EmbeddingInputs{in.values, acc, reg, in.t0});
}

namespace {

Var dropout(Var x, double rate, Rng& rng) {
  Tensor mask(x.shape());
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask.storage()) m = rng.bernoulli(rate) ? 0.0 : keep;
  return mul(x, x.tape().constant(std::move(mask)));
}

}  // namespace

Var ConFormer::layer(std::span<const Var> bound, std::size_t index, Var x, const ForwardOptions& opts,
                     std::uint64_t dropout_stream, ForwardTrace* trace) const {
  const LayerParams& lp = layers_.at(index);
  Tape& tape = x.tape();
  const Shape& xs = x.shape();
  const Shape token_shape{xs[0], xs[1], 1};

  const Var x_c = compute_condition(x, op_, cfg_.hops);
  ConditionFactors fc = generate_factors(x_c, bound, lp.attn_factors);
  ConditionFactors ff = generate_factors(x_c, bound, lp.ff_factors);
  for (ConditionFactors* f : {&fc, &ff}) {
    if (cfg_.has(Ablation::kNoGamma)) f->gamma = tape.constant(Tensor(xs, 1.0));
    if (cfg_.has(Ablation::kNoBeta)) f->beta = tape.constant(Tensor(xs, 0.0));
    if (cfg_.has(Ablation::kNoAlpha)) f->alpha = tape.constant(Tensor(token_shape, 1.0));
  }
  if (trace) {
    trace->attn_factors.push_back(fc);
    trace->ff_factors.push_back(ff);
  }

  auto normalize = [&](Var in, const ConditionFactors& f, std::optional<std::size_t> gain,
                       std::optional<std::size_t> bias) {
    if (cfg_.has(Ablation::kPlainLayerNorm))
      return add_bias(mul_channels(layer_normalize(in, cfg_.eps), bound[*gain]), bound[*bias]);
    return gln(in, f, cfg_.eps);
  };

  Rng rng(derive_seed(opts.dropout_seed, dropout_stream, index));
  const bool drop = opts.training && cfg_.dropout > 0.0;

  // Attention branch.
  const Var x_gln = normalize(x, fc, lp.ln1_gain, lp.ln1_bias);
  const QKV qkv = conditional_qkv(x_gln, x_c, bound, lp.attention);
  const std::size_t heads = lp.attention.cfg.n_heads;
  const Var x_sp = cfg_.has(Ablation::kNoSpatial) ? tape.constant(Tensor(xs))
                                                  : spatial_attention(qkv.q, qkv.k, qkv.v, heads);
  const Var x_te = cfg_.has(Ablation::kNoTemporal) ? tape.constant(Tensor(xs))
                                                   : temporal_attention(qkv.q, qkv.k, qkv.v, heads);
  Var x_att = fuse(x_sp, x_te, bound, lp.attention.fuse);
  if (drop) x_att = dropout(x_att, cfg_.dropout, rng);
  const Var x_res = modulated_residual(x, x_att, fc.alpha);

  // Feedforward branch.
  const Var x_gln2 = normalize(x_res, ff, lp.ln2_gain, lp.ln2_bias);
  Var x_ff = lp.ff_out(bound, gelu(lp.ff_in(bound, x_gln2)));
  if (drop) x_ff = dropout(x_ff, cfg_.dropout, rng);
  return modulated_residual(x_res, x_ff, ff.alpha);
}

Var ConFormer::readout(std::span<const Var> bound, Var x) const {
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[0] != cfg_.input_len || xs[1] != cfg_.n_nodes || xs[2] != cfg_.d_model)
    throw DimensionError("readout expects " + shape_string({cfg_.input_len, cfg_.n_nodes, cfg_.d_model}) +
                         ", got " + shape_string(xs));
  const Var per_node = reshape(swap_leading_axes(x), {cfg_.n_nodes, cfg_.input_len * cfg_.d_model});
  const Var horizon_by_node = swap_leading_axes(readout_(bound, per_node));
  return reshape(horizon_by_node, {cfg_.horizon, cfg_.n_nodes, 1});
}

Var ConFormer::forward(std::span<const Var> bound, const WindowInput& in, const ForwardOptions& opts,
                       ForwardTrace* trace) const {
  if (bound.size() != params_.size())
    throw DimensionError("forward got " + std::to_string(bound.size()) + " bound parameters, model has " +
                         std::to_string(params_.size()));
  Var x = embed(bound, in);
  if (trace) trace->embedding = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = layer(bound, l, x, opts, l, trace);
    if (trace) trace->layer_outputs.push_back(x);
  }
  Var y = readout(bound, x);
  if (trace) trace->output = y;
  return y;
}

Tensor ConFormer::predict(const WindowInput& in) const {
  Tape tape(false);
  const std::vector<Var> bound = params_.bind(tape);
  return forward(bound, in).value();
}

std::size_t count_params(const ParamSet& params) { return params.count_scalars(); }

std::uint64_t estimate_flops(const ModelConfig& cfg, std::size_t n_edges) {
  const std::uint64_t k = static_cast<std::uint64_t>(cfg.hops);
  const std::uint64_t e = n_edges;
  const std::uint64_t d = cfg.d_model;
  const std::uint64_t n = cfg.n_nodes;
  const std::uint64_t t = cfg.input_len;
  return k * e * d + (t * n * n * d + n * t * t * d) + n * t * d * d;
}

}  // namespace conformer
