#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "conformer/autodiff.hpp"
#include "conformer/tensor.hpp"

namespace conformer {

// Seeded generator whose derived draws are fixed by this code rather than by
// the standard library's distribution implementations, so a seed yields the
// same numbers on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Mixes a base seed with stream identifiers (epoch, window, ...) into an
// independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

// Ordered, named set of learnable arrays. The order of add() calls is the
// flat enumeration used by checkpoints and gradient records.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor init);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  Tensor& value(std::size_t i) { return values_.at(i); }
  std::size_t find(const std::string& name) const;  // throws when absent

  // Total number of scalar learnables.
  std::size_t count_scalars() const;

  // Records every parameter as a gradient-carrying leaf on `tape`.
  std::vector<Var> bind(Tape& tape) const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// Affine layer: ids of a [in, out] weight and an [out] bias in a ParamSet.
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;

  // Glorot-uniform weights, zero bias.
  static Linear create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  static Linear zeros(ParamSet& params, const std::string& name, std::size_t in, std::size_t out);

  Var operator()(std::span<const Var> bound, Var x) const { return linear(x, bound[weight], bound[bias]); }
};

}  // namespace conformer
