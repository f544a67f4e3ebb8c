#pragma once

#include "hcl/encoder.hpp"
#include "hcl/graph.hpp"
#include "hcl/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace hcl {

// Learnable node-selection pooling. Each head attends over all nodes with
// softmax(Q K^T / sqrt(d_k)) and aggregates values produced by its own GCNII
// stack, so the attention output carries topology as well as feature
// similarity. Node scores are tanh(MH(H) * score_vector).
struct L2PoolLayer {
  struct Head {
    Parameter query;  // d_k x d_k
    Parameter key;    // d_k x d_k
    GcniiStack value;
  };

  std::vector<Head> heads;
  Parameter output;        // (heads * d_k) x d_model
  Parameter score_vector;  // d_model x 1
  double ratio = 1.0;

  Index model_dim() const { return output.value.cols(); }
  Index head_dim() const { return heads.empty() ? 0 : heads.front().query.value.rows(); }
  void collect(std::vector<Parameter*>& out);
};

struct L2PoolShape {
  Index model_dim = 512;
  Index heads = 4;
  Index gcnii_layers = 4;
  double gcnii_alpha = 0.1;
};

L2PoolLayer make_l2pool_layer(const std::string& prefix, const L2PoolShape& shape, double ratio, Rng& rng);

// Multi-head topology-aware self-attention output, n x d_model. When
// `attention_out` is non-null it receives the per-head n x n attention weights.
Tensor attend(Tape& tape, L2PoolLayer& layer, const Tensor& h, const PropagationMatrix& prop,
              std::vector<Matrix>* attention_out = nullptr);

// n x 1 scores in (-1, 1).
Tensor score(Tape& tape, L2PoolLayer& layer, const Tensor& h, const PropagationMatrix& prop);

// ceil(ratio * n), never below 1.
Index pooled_size(Index n, double ratio);

// Indices of the pooled_size(n, ratio) largest scores in ascending index
// order; equal scores prefer the smaller index.
std::vector<Index> top_k_select(std::span<const double> scores, double ratio);

struct PoolOptions {
  bool gate = true;               // scale kept rows by (1 + score)
  bool two_hop_closure = false;   // child adjacency from A + A^2 instead of A
  InputMode mode = InputMode::adjacency;
  DiffusionOptions diffusion;
};

struct PoolResult {
  std::vector<Index> selected;
  Tensor scores;          // n x 1
  Tensor child_features;  // |selected| x d
  SparseMatrix child_adjacency;
  PropagationMatrix child_prop;
};

// Keeps `selected` rows of `features`, gated by (1 + scores[selected]) when
// `gate` is set.
Tensor gate_rows(const Tensor& features, std::span<const Index> selected, const Tensor& scores, bool gate);

// Child graph on the selected nodes: induced adjacency (or its two-hop
// closure) and a freshly built propagation matrix.
void build_child_structure(const SparseMatrix& parent_adjacency, std::span<const Index> selected,
                           const PoolOptions& options, SparseMatrix& child_adjacency, PropagationMatrix& child_prop);

// One coarsening step. `h` (n x d_model) drives the scores; `features`
// (n x d) are the rows carried to the child graph.
PoolResult coarsen(Tape& tape, L2PoolLayer& layer, const Tensor& h, const Tensor& features, const PropagationMatrix& prop,
                   const SparseMatrix& parent_adjacency, const PoolOptions& options);

}  // namespace hcl
