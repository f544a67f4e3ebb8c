#pragma once

#include "hcl/graph.hpp"
#include "hcl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace hcl {

// One level of the scale pyramid for both branches.
struct ScaleLevel {
  std::vector<Index> selected;  // rows of the parent level kept here (empty at scale 0)
  std::vector<Index> origin;    // node ids in the input graph
  SparseMatrix adjacency;
  PropagationMatrix prop;
  Tensor features;          // positive-branch input rows
  ChannelOutputs positive;  // (H1, H2)
  Tensor mixed;             // H1 + delta H2
  std::optional<Tensor> negative_features;
  std::optional<ChannelOutputs> negative;
  std::optional<Tensor> scores;  // parent-level pooling scores that produced this level
};

struct ScalePyramid {
  std::vector<ScaleLevel> levels;
};

// Encodes scale 0, then repeatedly pools and re-encodes. When
// `negative_features` is given the corrupted branch is carried through the same
// selections and gates.
ScalePyramid forward_pyramid(Tape& tape, HclModel& model, const GraphView& graph, const PropagationMatrix& prop,
                             const Matrix* negative_features = nullptr);

struct PyramidLoss {
  Tensor total;
  std::vector<Tensor> per_scale;
};

// Requires a pyramid built with negative features.
PyramidLoss pyramid_loss(Tape& tape, HclModel& model, const ScalePyramid& pyramid);

// Adam with bias correction; state is keyed by position in the parameter list.
class Adam {
public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Parameter* const> params);
  std::int64_t steps() const { return t_; }

private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct EpochRecord {
  Index epoch = 0;
  double total_loss = 0;
  std::vector<double> scale_losses;
  std::vector<double> deltas;
};

struct TrainResult {
  std::vector<EpochRecord> trace;
  Index best_epoch = -1;
  double best_loss = 0;
  bool stopped_early = false;
};

// Feature preprocessing shared by training and inference.
Matrix prepare_features(const TrainConfig& config, const Matrix& features);

// Seed for the feature shuffle of a given epoch.
std::uint64_t corruption_seed(std::uint64_t run_seed, Index epoch, Index graph_index = 0);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Full-batch training. Stops after config.max_epochs or config.patience epochs
// without a lower loss; the model is left holding the best-loss parameters.
// Throws NumericalError naming the first non-finite tensor if the loss is NaN/Inf.
TrainResult train(HclModel& model, const GraphView& graph, const EpochCallback& on_epoch = {});

// One optimizer step per graph per epoch; the recorded loss is the mean over graphs.
TrainResult train(HclModel& model, std::span<const GraphView> graphs, const EpochCallback& on_epoch = {});

// Inference embeddings on the full graph: H1 + delta0 H2 (or [H1 | H2] with
// embed_fusion = concat, or H1 for a single channel).
Matrix embed(HclModel& model, const GraphView& graph);

// CSV: epoch,total_loss,scale0_loss,...,delta0,...
void write_loss_trace(const TrainResult& result, const std::filesystem::path& path);

}  // namespace hcl
