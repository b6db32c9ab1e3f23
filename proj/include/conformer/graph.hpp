#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "conformer/autodiff.hpp"
#include "conformer/tensor.hpp"

namespace conformer {

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  double weight = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

// Road network: N nodes and a weighted directed edge list.
struct GraphSpec {
  std::size_t n_nodes = 0;
  std::vector<Edge> edges;

  // Throws ValidationError on out-of-range ids, negative weights or duplicates.
  void validate() const;

  friend bool operator==(const GraphSpec&, const GraphSpec&) = default;
};

// Row-normalized adjacency D^-1 (A [+ I]) in CSR form. Row i mixes the
// features of the nodes listed in its entries into node i.
class PropagationOperator {
 public:
  struct Entry {
    std::size_t col;
    double weight;
  };

  PropagationOperator() = default;
  PropagationOperator(std::size_t n, std::vector<std::size_t> row_begin, std::vector<Entry> entries);

  std::size_t n_nodes() const { return n_; }
  std::size_t nonzeros() const { return entries_.size(); }
  std::span<const Entry> row(std::size_t i) const {
    return {entries_.data() + row_begin_[i], row_begin_[i + 1] - row_begin_[i]};
  }
  Tensor dense() const;

  // out[t, i, :] = sum_j L[i, j] x[t, j, :] for x of shape [T, N, D].
  Tensor apply(const Tensor& x) const;
  // out[t, j, :] += sum_i L[i, j] g[t, i, :]
  void apply_transpose_add(const Tensor& g, Tensor& out) const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_begin_{0};
  std::vector<Entry> entries_;
};

PropagationOperator normalize_adjacency(const GraphSpec& graph, bool add_self_loops);

// [x | Lx | L^2 x | ... | L^K x] along the feature axis; x is [T, N, D].
Tensor propagate(const Tensor& x, const PropagationOperator& op, int k_hops);
Var propagate(Var x, const PropagationOperator& op, int k_hops);

// Single differentiable application of the operator over the node axis.
Var apply_operator(Var x, const PropagationOperator& op);

}  // namespace conformer
