#include "hcl/l2pool.hpp"

#include "hcl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hcl {

void L2PoolLayer::collect(std::vector<Parameter*>& out) {
  for (Head& h : heads) {
    out.push_back(&h.query);
    out.push_back(&h.key);
    h.value.collect(out);
  }
  out.push_back(&output);
  out.push_back(&score_vector);
}

L2PoolLayer make_l2pool_layer(const std::string& prefix, const L2PoolShape& shape, double ratio, Rng& rng) {
  if (shape.heads < 1) throw PreconditionError("l2pool: heads must be >= 1");
  if (shape.model_dim % shape.heads != 0) {
    throw PreconditionError("l2pool: model dim " + std::to_string(shape.model_dim) + " not divisible by " +
                            std::to_string(shape.heads) + " heads");
  }
  if (!(ratio > 0.0 && ratio <= 1.0)) throw PreconditionError("l2pool: ratio must lie in (0, 1]");
  const Index dk = shape.model_dim / shape.heads;
  L2PoolLayer layer;
  for (Index i = 0; i < shape.heads; ++i) {
    const std::string head = prefix + ".head" + std::to_string(i);
    L2PoolLayer::Head h;
    h.query = Parameter(head + ".Wq", xavier_uniform(dk, dk, rng));
    h.key = Parameter(head + ".Wk", xavier_uniform(dk, dk, rng));
    h.value = make_gcnii_stack(head + ".gcnii", dk, dk, shape.gcnii_layers, shape.gcnii_alpha, rng);
    layer.heads.push_back(std::move(h));
  }
  layer.output = Parameter(prefix + ".Wo", xavier_uniform(dk * shape.heads, shape.model_dim, rng));
  layer.score_vector = Parameter(prefix + ".score", xavier_uniform(shape.model_dim, 1, rng));
  layer.ratio = ratio;
  return layer;
}

Tensor attend(Tape& tape, L2PoolLayer& layer, const Tensor& h, const PropagationMatrix& prop,
              std::vector<Matrix>* attention_out) {
  const Index dk = layer.head_dim();
  if (h.cols() != dk * static_cast<Index>(layer.heads.size())) {
    throw DimensionError("attend: input has " + std::to_string(h.cols()) + " columns, layer expects " +
                         std::to_string(dk * static_cast<Index>(layer.heads.size())));
  }
  if (prop.size() != h.rows()) {
    throw DimensionError("attend: propagation size " + std::to_string(prop.size()) + " vs " + std::to_string(h.rows()) +
                         " nodes");
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> outs;
  outs.reserve(layer.heads.size());
  if (attention_out != nullptr) attention_out->clear();
  for (std::size_t i = 0; i < layer.heads.size(); ++i) {
    L2PoolLayer::Head& head = layer.heads[i];
    const Tensor slice = slice_cols(h, static_cast<Index>(i) * dk, dk);
    const Tensor q = matmul(slice, tape.parameter(head.query));
    const Tensor k = matmul(slice, tape.parameter(head.key));
    const Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dk));
    if (attention_out != nullptr) attention_out->push_back(weights.value());
    const Tensor values = gcnii_forward(tape, head.value, prop, slice);
    outs.push_back(matmul(weights, values));
  }
  return matmul(concat_cols(outs), tape.parameter(layer.output));
}

Tensor score(Tape& tape, L2PoolLayer& layer, const Tensor& h, const PropagationMatrix& prop) {
  return tanh(matmul(attend(tape, layer, h, prop), tape.parameter(layer.score_vector)));
}

Index pooled_size(Index n, double ratio) {
  // The small offset keeps products such as 0.9 * 100 from rounding up past 90.
  const auto k = static_cast<Index>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  return std::clamp<Index>(k, 1, n);
}

std::vector<Index> top_k_select(std::span<const double> scores, double ratio) {
  if (scores.empty()) throw PreconditionError("top_k_select: empty score vector");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw PreconditionError("top_k_select: ratio must lie in (0, 1]");
  for (double s : scores) {
    if (!std::isfinite(s)) throw PreconditionError("top_k_select: non-finite score");
  }
  const auto n = static_cast<Index>(scores.size());
  const Index k = pooled_size(n, ratio);
  std::vector<Index> order(scores.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
    const double sa = scores[static_cast<std::size_t>(a)], sb = scores[static_cast<std::size_t>(b)];
    return sa > sb || (sa == sb && a < b);
  });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

Tensor gate_rows(const Tensor& features, std::span<const Index> selected, const Tensor& scores, bool gate) {
  const Tensor kept = gather_rows(features, selected);
  if (!gate) return kept;
  return scale_rows(kept, add_scalar(gather_rows(scores, selected), 1.0));
}

void build_child_structure(const SparseMatrix& parent_adjacency, std::span<const Index> selected,
                           const PoolOptions& options, SparseMatrix& child_adjacency, PropagationMatrix& child_prop) {
  child_adjacency = options.two_hop_closure ? induced_subgraph(two_hop_closure(parent_adjacency), selected)
                                            : induced_subgraph(parent_adjacency, selected);
  child_prop = make_propagation(child_adjacency, options.mode, options.diffusion);
}

PoolResult coarsen(Tape& tape, L2PoolLayer& layer, const Tensor& h, const Tensor& features, const PropagationMatrix& prop,
                   const SparseMatrix& parent_adjacency, const PoolOptions& options) {
  if (features.rows() != h.rows()) {
    throw DimensionError("coarsen: " + std::to_string(features.rows()) + " feature rows vs " + std::to_string(h.rows()) +
                         " scored rows");
  }
  if (parent_adjacency.rows() != h.rows()) throw DimensionError("coarsen: adjacency size does not match node count");
  PoolResult r;
  r.scores = score(tape, layer, h, prop);
  const Matrix& y = r.scores.value();
  if (!y.allFinite()) {
    std::string where = "pooling scores";
    if (auto bad = tape.first_non_finite()) where = "tensor #" + std::to_string(bad->first) + " (" + bad->second + ")";
    throw NumericalError("coarsen: non-finite pooling scores; first non-finite value in " + where);
  }
  r.selected = top_k_select(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), layer.ratio);
  r.child_features = gate_rows(features, r.selected, r.scores, options.gate);
  build_child_structure(parent_adjacency, r.selected, options, r.child_adjacency, r.child_prop);
  return r;
}

}  // namespace hcl
