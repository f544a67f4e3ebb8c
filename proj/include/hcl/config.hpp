#pragma once

#include "hcl/graph.hpp"
#include "hcl/objective.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hcl {

enum class EmbedFusion { mix, concat };

struct TrainConfig {
  Index hidden_dim = 512;
  std::vector<double> pool_ratios{0.9, 0.8, 0.7};
  Index heads = 4;
  Index gcnii_layers = 4;
  double gcnii_alpha = 0.1;
  Index encoder_layers = 1;
  Index channels = 2;
  double lr = 0.001;
  Index max_epochs = 2000;
  Index patience = 20;
  InputMode input_mode = InputMode::adjacency;
  double teleport = 0.2;
  Index top_t = 128;
  std::uint64_t seed = 0;
  LossReduction loss_reduction = LossReduction::mean;
  bool adjacency_closure = false;
  bool pool_gate = true;
  bool row_normalize_features = false;
  EmbedFusion embed_fusion = EmbedFusion::mix;

  // Throws ConfigError on the first out-of-domain value.
  void validate() const;

  // Canonical `key = value` text; parse(to_text()) reproduces the config.
  std::string to_text() const;
  static TrainConfig parse(std::string_view text, const std::string& source = "<config>");
  static TrainConfig load(const std::filesystem::path& path);

  // Applies one `key = value` pair. Unknown keys are errors.
  void set(const std::string& key, const std::string& value);

  // Keeps the first `scales - 1` pool ratios (a single scale means no pooling).
  void truncate_scales(Index scales);

  DiffusionOptions diffusion() const { return {teleport, top_t}; }
};

// FNV-1a, 64-bit, as 16 hex digits.
std::string content_hash(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace hcl
