#include "conformer/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "conformer/errors.hpp"
#include "conformer/kernels.hpp"

namespace conformer {

void GraphSpec::validate() const {
  if (n_nodes == 0) throw ValidationError("graph must have at least one node");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const Edge& e : edges) {
    if (e.src >= n_nodes || e.dst >= n_nodes)
      throw ValidationError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                            ") references a node outside [0, " + std::to_string(n_nodes) + ")");
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight))
      throw ValidationError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                            ") has invalid weight " + std::to_string(e.weight));
    if (!seen.emplace(e.src, e.dst).second)
      throw ValidationError("duplicate edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) + ")");
  }
}

PropagationOperator::PropagationOperator(std::size_t n, std::vector<std::size_t> row_begin,
                                         std::vector<Entry> entries)
    : n_(n), row_begin_(std::move(row_begin)), entries_(std::move(entries)) {
  if (row_begin_.size() != n_ + 1 || row_begin_.back() != entries_.size())
    throw ContractError("malformed CSR propagation operator");
}

Tensor PropagationOperator::dense() const {
  Tensor out({n_, n_});
  for (std::size_t i = 0; i < n_; ++i)
    for (const Entry& e : row(i)) out.at(i, e.col) += e.weight;
  return out;
}

namespace {

void check_node_axis(const Tensor& x, std::size_t n) {
  if (x.rank() != 3 || x.dim(1) != n)
    throw DimensionError("propagation operator over " + std::to_string(n) + " nodes cannot apply to " +
                         shape_string(x.shape()));
}

}  // namespace

Tensor PropagationOperator::apply(const Tensor& x) const {
  check_node_axis(x, n_);
  const std::size_t steps = x.dim(0);
  const std::size_t d = x.dim(2);
  Tensor out(x.shape());
  for (std::size_t t = 0; t < steps; ++t) {
    const double* xt = x.data().data() + t * n_ * d;
    double* ot = out.data().data() + t * n_ * d;
    for (std::size_t i = 0; i < n_; ++i)
      for (const Entry& e : row(i)) kernels::axpy(e.weight, xt + e.col * d, ot + i * d, d);
  }
  return out;
}

void PropagationOperator::apply_transpose_add(const Tensor& g, Tensor& out) const {
  check_node_axis(g, n_);
  const std::size_t steps = g.dim(0);
  const std::size_t d = g.dim(2);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* gt = g.data().data() + t * n_ * d;
    double* ot = out.data().data() + t * n_ * d;
    for (std::size_t i = 0; i < n_; ++i)
      for (const Entry& e : row(i)) kernels::axpy(e.weight, gt + i * d, ot + e.col * d, d);
  }
}

PropagationOperator normalize_adjacency(const GraphSpec& graph, bool add_self_loops) {
  graph.validate();
  const std::size_t n = graph.n_nodes;
  std::vector<std::vector<PropagationOperator::Entry>> rows(n);
  for (const Edge& e : graph.edges)
    if (e.weight > 0.0) rows[e.src].push_back({e.dst, e.weight});
  if (add_self_loops) {
    for (std::size_t i = 0; i < n; ++i) {
      auto it = std::find_if(rows[i].begin(), rows[i].end(), [i](const auto& e) { return e.col == i; });
      if (it == rows[i].end()) rows[i].push_back({i, 1.0});
      else it->weight += 1.0;
    }
  }
  std::vector<std::size_t> row_begin{0};
  std::vector<PropagationOperator::Entry> entries;
  for (auto& r : rows) {
    std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.col < b.col; });
    double degree = 0.0;
    for (const auto& e : r) degree += e.weight;
    for (const auto& e : r) entries.push_back({e.col, e.weight / degree});
    row_begin.push_back(entries.size());
  }
  return PropagationOperator(n, std::move(row_begin), std::move(entries));
}

Tensor propagate(const Tensor& x, const PropagationOperator& op, int k_hops) {
  if (k_hops < 0) throw ContractError("propagate: hop count must be >= 0, got " + std::to_string(k_hops));
  check_node_axis(x, op.n_nodes());
  std::vector<Tensor> hops{x};
  for (int k = 1; k <= k_hops; ++k) hops.push_back(op.apply(hops.back()));
  return concat_last_axis(hops);
}

Var apply_operator(Var x, const PropagationOperator& op) {
  Tensor out = op.apply(x.value());
  return x.tape().record("propagate_hop", std::move(out), {x},
                         [x, &op](Tape& t, const Tensor& g, const Tensor&) {
    if (!t.requires_grad(x)) return;
    op.apply_transpose_add(g, t.grad_buffer(x.id()));
  });
}

Var propagate(Var x, const PropagationOperator& op, int k_hops) {
  if (k_hops < 0) throw ContractError("propagate: hop count must be >= 0, got " + std::to_string(k_hops));
  check_node_axis(x.value(), op.n_nodes());
  if (k_hops == 0) return x;
  std::vector<Var> hops{x};
  for (int k = 1; k <= k_hops; ++k) hops.push_back(apply_operator(hops.back(), op));
  return concat_last_axis(hops);
}

}  // namespace conformer
