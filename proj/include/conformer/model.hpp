#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conformer/attention.hpp"
#include "conformer/conditioning.hpp"
#include "conformer/embeddings.hpp"
#include "conformer/graph.hpp"
#include "conformer/params.hpp"

namespace conformer {

// Component switches for ablation runs. Each one changes a single piece of
// the block and leaves everything else untouched.
enum class Ablation {
  kNoAccident,    // accident ids forced to 0
  kNoRegulation,  // regulation ids forced to 0
  kNoAlpha,       // alpha frozen at 1
  kNoBeta,        // beta frozen at 0
  kNoGamma,       // gamma frozen at 1
  kNoSpatial,     // spatial attention output replaced by zeros
  kNoTemporal,    // temporal attention output replaced by zeros
  kPlainLayerNorm,  // fixed learnable LayerNorm affine instead of generated gamma/beta
};

std::string_view ablation_name(Ablation a);
Ablation parse_ablation(std::string_view name);  // throws ConfigError
std::span<const Ablation> all_ablations();

struct ModelConfig {
  std::size_t input_len = 12;   // T
  std::size_t horizon = 12;     // T'
  std::size_t n_nodes = 1;      // N
  std::size_t input_dim = 1;    // D_in
  EmbeddingDims dims;
  std::size_t d_model = 32;
  int hops = 2;                 // K
  std::size_t n_heads = 4;
  std::size_t n_layers = 1;
  double dropout = 0.1;
  double eps = 1e-5;
  bool self_loops = true;
  std::size_t steps_per_day = 288;
  std::size_t acc_vocab = 2;
  std::size_t reg_vocab = 2;
  std::set<Ablation> ablations;

  bool has(Ablation a) const { return ablations.contains(a); }
  std::size_t cond_width() const { return static_cast<std::size_t>(hops + 1) * d_model; }
  // Throws ConfigError when a field is out of range.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerParams {
  FactorGenerator attn_factors;  // gamma_c, beta_c, alpha_c
  FactorGenerator ff_factors;    // gamma_f, beta_f, alpha_f
  AttentionParams attention;
  Linear ff_in;                  // D_model -> 4 D_model
  Linear ff_out;                 // 4 D_model -> D_model
  // Present only with kPlainLayerNorm.
  std::optional<std::size_t> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

// One input window in model units.
struct WindowInput {
  Tensor values;              // [T, N, D_in], normalized
  std::vector<int> acc_ids;   // T*N
  std::vector<int> reg_ids;   // T*N
  std::int64_t t0 = 0;        // absolute step of the first input row
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

// Intermediate values of one forward pass, for inspection in tests.
struct ForwardTrace {
  Var embedding;                   // X^o
  std::vector<Var> layer_outputs;  // one per layer
  std::vector<ConditionFactors> attn_factors;
  std::vector<ConditionFactors> ff_factors;
  Var output;                      // [T', N, 1]
};

class ConFormer {
 public:
  // Fresh parameters drawn from `seed`.
  ConFormer(ModelConfig cfg, const GraphSpec& graph, const CalendarIndexer& calendar, std::uint64_t seed);
  // Parameters supplied (checkpoint restore). Names and shapes must match the layout.
  ConFormer(ModelConfig cfg, const GraphSpec& graph, const CalendarIndexer& calendar, const ParamSet& params);

  const ModelConfig& config() const { return cfg_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }
  const PropagationOperator& propagation() const { return op_; }
  const CalendarIndexer& calendar() const { return calendar_; }
  const EmbeddingTables& embedding_tables() const { return embed_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  const Linear& readout_layer() const { return readout_; }

  // [T', N, 1] prediction in normalized units.
  Var forward(std::span<const Var> bound, const WindowInput& in, const ForwardOptions& opts = {},
              ForwardTrace* trace = nullptr) const;

  Var embed(std::span<const Var> bound, const WindowInput& in) const;
  Var layer(std::span<const Var> bound, std::size_t index, Var x, const ForwardOptions& opts,
            std::uint64_t dropout_stream, ForwardTrace* trace) const;
  // [T, N, D_model] -> [T', N, 1] through a shared per-node affine map of the flattened window.
  Var readout(std::span<const Var> bound, Var x) const;

  // Forward without recording gradients.
  Tensor predict(const WindowInput& in) const;

 private:
  void build_layout(ParamSet& params, Rng& rng);

  ModelConfig cfg_;
  CalendarIndexer calendar_;
  PropagationOperator op_;
  ParamSet params_;
  EmbeddingTables embed_;
  std::vector<LayerParams> layers_;
  Linear readout_;
};

std::size_t count_params(const ParamSet& params);

// K|E|D + (T N^2 D + N T^2 D) + N T D^2 with D = d_model.
std::uint64_t estimate_flops(const ModelConfig& cfg, std::size_t n_edges);

}  // namespace conformer
