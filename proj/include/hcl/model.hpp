#pragma once

#include "hcl/config.hpp"
#include "hcl/encoder.hpp"
#include "hcl/l2pool.hpp"
#include "hcl/objective.hpp"

#include <filesystem>
#include <vector>

namespace hcl {

// Every learnable piece of the hierarchical contrastive model:
//   - the dual-channel encoder, shared by all scales,
//   - one pooling layer per pooled scale,
//   - one discriminator and one channel-mixing delta per scale (incl. scale 0).
struct HclModel {
  TrainConfig config;
  Index input_dim = 0;
  DualChannelEncoder encoder;
  std::vector<L2PoolLayer> pools;
  std::vector<Discriminator> discriminators;
  std::vector<Parameter> deltas;  // 1x1 each; empty for a single-channel encoder

  static HclModel create(const TrainConfig& config, Index input_dim);

  Index num_scales() const { return static_cast<Index>(discriminators.size()); }

  // Fixed traversal order; checkpoints and the optimizer rely on it.
  std::vector<Parameter*> parameters();

  void zero_grad();
  // Keeps every delta inside [-1, 1].
  void clamp_deltas();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary, little-endian:
//   "HCLCKPT\0" | u32 version | u64 input_dim | u32 len, config text |
//   u32 count | count x (u32 len, name | u64 rows | u64 cols | rows*cols f64 row-major)
void save_checkpoint(HclModel& model, const std::filesystem::path& path);

// Rebuilds the model from the embedded config and fills its parameters.
HclModel load_checkpoint(const std::filesystem::path& path);

// Fills an existing model. Names and shapes must match exactly.
void load_checkpoint_into(HclModel& model, const std::filesystem::path& path);

}  // namespace hcl
