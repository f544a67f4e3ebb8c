#pragma once

#include "hcl/encoder.hpp"
#include "hcl/tensor.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hcl {

// Bilinear critic D(h, s) = h W s^T, one per scale.
struct Discriminator {
  Parameter weight;  // F' x F'
};

// Weight drawn as for a 1 x F' x F' bilinear tensor (fan_in = F'^2, fan_out = F'),
// which keeps initial logits near zero.
Discriminator make_discriminator(const std::string& name, Index dim, Rng& rng);

enum class LossReduction { mean, sum };

// sigmoid(column mean of h): 1 x F' summary vector.
Tensor readout(const Tensor& h);

// m x 1 logits h_node * W * s^T.
Tensor discriminate(Tape& tape, Discriminator& d, const Tensor& h_node, const Tensor& s);

// h1 + delta * h2, or h1 alone for a single-channel encoder.
Tensor mix_channels(const Tensor& h1, const std::optional<Tensor>& h2, const std::optional<Tensor>& delta);

// Jensen-Shannon BCE between summary(pos) and positive / negative rows:
//   -(1/2m) [sum log sigmoid(D(pos_u, s)) + sum log(1 - sigmoid(D(neg_v, s)))]
// The 1/2m factor is dropped for LossReduction::sum.
Tensor contrastive_loss(Tape& tape, Discriminator& d, const Tensor& pos, const Tensor& neg, LossReduction reduction);

// Mixes both branches with the same delta, then contrastive_loss.
Tensor scale_loss(Tape& tape, Discriminator& d, const Tensor& h1_pos, const std::optional<Tensor>& h2_pos,
                  const Tensor& h1_neg, const std::optional<Tensor>& h2_neg, const std::optional<Tensor>& delta,
                  LossReduction reduction);

// [1, r1, r1 r2, ...]: the weight of each scale loss.
std::vector<double> ratio_weights(std::span<const double> ratios);

// L0 + sum_k (prod_{j<=k} r_j) L_k. Requires |scale_losses| == |ratios| + 1.
Tensor total_loss(std::span<const Tensor> scale_losses, std::span<const double> ratios);

}  // namespace hcl
