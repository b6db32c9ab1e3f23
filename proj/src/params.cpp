#include "conformer/params.hpp"

#include <cmath>
#include <numbers>

#include "conformer/errors.hpp"

namespace conformer {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ContractError("Rng::below(0)");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a simple combination.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

std::size_t ParamSet::add(std::string name, Tensor init) {
  for (const auto& n : names_)
    if (n == name) throw ContractError("duplicate parameter name " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

std::size_t ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw ContractError("no parameter named " + name);
}

std::size_t ParamSet::count_scalars() const {
  std::size_t n = 0;
  for (const Tensor& v : values_) n += v.size();
  return n;
}

std::vector<Var> ParamSet::bind(Tape& tape) const {
  std::vector<Var> bound;
  bound.reserve(values_.size());
  for (const Tensor& v : values_) bound.push_back(tape.leaf(v));
  return bound;
}

Linear Linear::create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w({in, out});
  for (double& v : w.storage()) v = rng.uniform(-limit, limit);
  Linear l;
  l.weight = params.add(name + ".weight", std::move(w));
  l.bias = params.add(name + ".bias", Tensor({out}));
  l.in = in;
  l.out = out;
  return l;
}

Linear Linear::zeros(ParamSet& params, const std::string& name, std::size_t in, std::size_t out) {
  Linear l;
  l.weight = params.add(name + ".weight", Tensor({in, out}));
  l.bias = params.add(name + ".bias", Tensor({out}));
  l.in = in;
  l.out = out;
  return l;
}

}  // namespace conformer
