#pragma once

#include "hcl/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace hcl {

enum class Split : std::uint8_t { none, train, val, test };

// Attributed undirected graph. Adjacency is symmetric CSR with nonnegative
// weights; labels and splits are evaluation-only and may be empty.
struct Graph {
  Matrix features;
  SparseMatrix adjacency;
  std::vector<int> labels;  // -1 = unlabeled
  std::vector<Split> splits;

  Index num_nodes() const { return features.rows(); }
  bool has_labels() const { return !labels.empty(); }

  // Throws PreconditionError naming the first violated invariant.
  void validate() const;
};

// The part of a graph training is allowed to see.
struct GraphView {
  const Matrix& features;
  const SparseMatrix& adjacency;

  GraphView(const Matrix& f, const SparseMatrix& a) : features(f), adjacency(a) {}
  explicit GraphView(const Graph& g) : features(g.features), adjacency(g.adjacency) {}
  Index num_nodes() const { return features.rows(); }
};

enum class InputMode { adjacency, diffusion };

struct PropagationMatrix {
  enum class Kind { normalized_adjacency, ppr_diffusion };

  Kind kind = Kind::normalized_adjacency;
  std::shared_ptr<const SparseMatrix> matrix;

  Index size() const { return matrix ? matrix->rows() : 0; }
};

struct DiffusionOptions {
  double teleport = 0.2;
  Index top_t = 128;
};

// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
PropagationMatrix normalize_adjacency(const SparseMatrix& adjacency);

// Personalized-PageRank diffusion teleport * (I - (1 - teleport) T)^-1 over the
// lazy random-walk matrix T = D^-1 (A + I). Each row keeps its top_t largest
// entries and is renormalized to sum 1.
PropagationMatrix ppr_diffusion(const SparseMatrix& adjacency, double teleport, Index top_t);

// Dense diffusion before sparsification; rows are probability distributions.
Matrix ppr_dense(const SparseMatrix& adjacency, double teleport);

PropagationMatrix make_propagation(const SparseMatrix& adjacency, InputMode mode, const DiffusionOptions& diffusion = {});

// Row-shuffled copy of `features`. The permutation is uniformly random and
// never the identity; it is written to `permutation` when requested.
Matrix corrupt_features(const Matrix& features, std::uint64_t seed, std::vector<Index>* permutation = nullptr);

// Same topology, shuffled feature rows.
Graph corrupt(const Graph& g, std::uint64_t seed);

// Rows scaled to unit L1 norm; all-zero rows are left untouched.
Matrix row_normalize(const Matrix& features);

// Symmetric CSR from an undirected edge list; each (u, v, w) is mirrored.
SparseMatrix adjacency_from_edges(Index n, const std::vector<std::tuple<Index, Index, double>>& edges);

// Adjacency restricted to rows/cols in `keep` (sorted ascending), reindexed 0..|keep|-1.
SparseMatrix induced_subgraph(const SparseMatrix& adjacency, std::span<const Index> keep);

// Binary adjacency of A + A^2 without self-loops, i.e. 1- and 2-hop reachability.
SparseMatrix two_hop_closure(const SparseMatrix& adjacency);

// ---- files ---------------------------------------------------------------

// Fixed file names inside a graph directory.
inline constexpr const char* kEdgeFile = "edges.tsv";
inline constexpr const char* kFeatureFile = "features.tsv";
inline constexpr const char* kLabelFile = "labels.txt";
inline constexpr const char* kMaskFile = "masks.txt";

Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                 const std::optional<std::filesystem::path>& label_path = std::nullopt,
                 const std::optional<std::filesystem::path>& mask_path = std::nullopt);

// Loads a directory holding edges.tsv + features.tsv and optionally labels.txt / masks.txt.
Graph load_graph_dir(const std::filesystem::path& dir);
void save_graph_dir(const Graph& g, const std::filesystem::path& dir);

// ---- synthetic data --------------------------------------------------------

struct SbmParams {
  Index blocks = 3;
  Index nodes_per_block = 100;
  double p_in = 0.1;
  double p_out = 0.01;
  double feature_noise = 1.0;
  std::uint64_t seed = 0;
};

// Stochastic block model with one-hot block features plus Gaussian noise,
// block labels and 10/10/80 train/val/test splits stratified by block.
Graph generate_sbm(const SbmParams& params);

}  // namespace hcl
