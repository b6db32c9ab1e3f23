#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "conformer/autodiff.hpp"
#include "conformer/params.hpp"
#include "conformer/tensor.hpp"

namespace conformer::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// entries whose true gradient is ~0 from dividing rounding noise by ~0.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_rel = 0.0;
  double max_abs = 0.0;
  std::size_t checked = 0;
};

using ScalarFn = std::function<Var(std::span<const Var>)>;

// Compares backward() against central differences for every entry of every
// input (or `samples` random entries when nonzero).
inline GradCheckResult check_gradient(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-5,
                                      std::size_t samples = 0, std::uint64_t seed = 7) {
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape tape(false);
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(tape.leaf(x));
    return f(vars).value()[0];
  };
  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.leaf(x));
  const GradientRecord grads = backward(f(vars), vars);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < inputs.size(); ++p)
    for (std::size_t i = 0; i < inputs[p].size(); ++i) coords.emplace_back(p, i);
  if (samples > 0 && samples < coords.size()) {
    Rng rng(seed);
    for (std::size_t i = 0; i < samples; ++i) std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
    coords.resize(samples);
  }
  GradCheckResult r;
  for (auto [p, i] : coords) {
    const double orig = inputs[p][i];
    inputs[p][i] = orig + h;
    const double up = eval(inputs);
    inputs[p][i] = orig - h;
    const double down = eval(inputs);
    inputs[p][i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grads[p][i];
    r.max_rel = std::max(r.max_rel, relative_error(analytic, numeric));
    r.max_abs = std::max(r.max_abs, std::abs(analytic - numeric));
    ++r.checked;
  }
  return r;
}

// Reduces a tensor-valued op to a scalar with fixed random weights so every
// output entry matters (a plain sum would hide softmax gradients).
inline Var weighted_sum(Var out, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(out, out.tape().constant(random_tensor(out.shape(), rng))));
}

inline std::vector<Tensor> param_values(const ParamSet& params) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back(params.value(i));
  return out;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("conformer_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace conformer::testing
