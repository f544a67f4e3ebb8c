#pragma once

#include "hcl/graph.hpp"
#include "hcl/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hcl {

// ---- linear probe ------------------------------------------------------------

struct ProbeOptions {
  double l2 = 1e-4;
  Index iterations = 300;
  double learning_rate = 0.5;
  Index eval_every = 10;  // validation checkpoints
  bool standardize = true;
};

struct ProbeResult {
  double accuracy_mean = 0;
  double accuracy_std = 0;
  Index runs = 0;
  std::vector<double> per_run;
};

// Multinomial logistic regression parameters: logits = x W + b.
struct ProbeModel {
  Matrix weight;         // d x classes
  Eigen::RowVectorXd bias;  // 1 x classes
};

// Mean cross-entropy over rows of x plus (l2 / 2) ||W||^2. Fills `grad` when given.
double probe_objective(const Matrix& x, std::span<const int> labels, const ProbeModel& model, double l2,
                       ProbeModel* grad = nullptr);

// Fits on the train split by gradient descent, keeps the iterate with the best
// validation accuracy (train accuracy when there is no validation split) and
// reports test accuracy. Each run starts from a different seeded init.
ProbeResult linear_probe(const Matrix& embeddings, std::span<const int> labels, std::span<const Split> splits, Index runs,
                         std::uint64_t seed, const ProbeOptions& options = {});

// Per class: `train` and `val` nodes drawn at random, the rest test.
std::vector<Split> stratified_split(std::span<const int> labels, Index train_per_class, Index val_per_class,
                                    std::uint64_t seed);

// ---- clustering -------------------------------------------------------------------

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centroids;
  double inertia = 0;
  std::vector<double> inertia_trace;  // per Lloyd iteration of the winning restart
  Index iterations = 0;
};

struct KMeansOptions {
  Index max_iterations = 100;
  double tolerance = 1e-6;  // max centroid shift
};

// Lloyd's algorithm from k-means++ seeds; the restart with the lowest inertia wins.
KMeansResult kmeans(const Matrix& points, Index k, Index runs, std::uint64_t seed, const KMeansOptions& options = {});

// Every restart, in order (for monotonicity and optimality checks).
std::vector<KMeansResult> kmeans_restarts(const Matrix& points, Index k, Index runs, std::uint64_t seed,
                                          const KMeansOptions& options = {});

double inertia(const Matrix& points, std::span<const int> assignment, Index k);

// Normalized mutual information with the geometric-mean normalization; 0 when
// either labelling has zero entropy.
double nmi(std::span<const int> pred, std::span<const int> truth);

// Adjusted Rand index under the permutation model.
double ari(std::span<const int> pred, std::span<const int> truth);

struct ClusterResult {
  double nmi = 0;
  double ari = 0;
  double nmi_std = 0;
  double ari_std = 0;
  Index runs = 0;
};

// Runs k-means `runs` times with independent seeds and averages NMI / ARI
// against the labelled nodes.
ClusterResult cluster_embeddings(const Matrix& embeddings, std::span<const int> labels, Index k, Index runs,
                                 std::uint64_t seed);

// ---- graph level ----------------------------------------------------------------

// Column mean of each graph's node embeddings, one row per graph.
Matrix graph_level_embed(std::span<const Matrix> node_embeddings);

// k stratified folds; fold f marks its own members test and everyone else train.
std::vector<std::vector<Split>> stratified_kfold(std::span<const int> labels, Index folds, std::uint64_t seed);

// Mean / std of test accuracy over stratified folds with the linear probe.
ProbeResult graph_classification(const Matrix& graph_embeddings, std::span<const int> labels, Index folds,
                                 std::uint64_t seed, const ProbeOptions& options = {});

// ---- files -----------------------------------------------------------------------

// Header `n d`, then n rows of tab-separated reals with 17 significant digits.
void write_embeddings(const Matrix& embeddings, const std::filesystem::path& path);
Matrix read_embeddings(const std::filesystem::path& path);

// Plain-text report: `[section]` headers followed by `key = value` lines.
class Report {
public:
  void section(const std::string& name);
  void add(const std::string& key, const std::string& value);
  void add(const std::string& key, double value);
  void add_block(const std::string& key, const std::string& multiline);
  std::string str() const { return text_; }
  void write(const std::filesystem::path& path) const;

private:
  std::string text_;
};

std::string format_real(double v, int digits = 17);

}  // namespace hcl
