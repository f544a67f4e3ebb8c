#pragma once

#include "hcl/graph.hpp"
#include "hcl/tensor.hpp"

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace hcl {

using Rng = std::mt19937_64;

// Glorot/Xavier uniform init: U(-b, b), b = sqrt(6 / (fan_in + fan_out)).
Matrix xavier_uniform(Index rows, Index cols, Rng& rng, double fan_in, double fan_out);
inline Matrix xavier_uniform(Index rows, Index cols, Rng& rng) {
  return xavier_uniform(rows, cols, rng, static_cast<double>(rows), static_cast<double>(cols));
}

inline constexpr double kPreluInitSlope = 0.25;

enum class Activation { prelu, identity };

// One graph convolution: act(prop * x * W).
struct GcnLayer {
  Parameter weight;
  Parameter slope;  // 1x1 PReLU slope
  Activation activation = Activation::prelu;

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&slope);
  }
};

GcnLayer make_gcn_layer(const std::string& prefix, Index d_in, Index d_out, Rng& rng);
Tensor gcn_forward(Tape& tape, GcnLayer& layer, const PropagationMatrix& prop, const Tensor& x);

// Deep GCN with initial residual and identity mapping:
//   H0 = x * P
//   H_{l+1} = act(((1 - alpha) prop H_l + alpha H0) ((1 - beta_l) I + beta_l W_l))
struct GcniiStack {
  struct Layer {
    Parameter weight;
    Parameter slope;
  };

  Parameter input_projection;
  std::vector<Layer> layers;
  double alpha = 0.1;
  std::vector<double> betas;
  Activation activation = Activation::prelu;

  void collect(std::vector<Parameter*>& out);
};

// beta_l = ln(lambda / l + 1) for l = 1..layers.
std::vector<double> gcnii_betas(Index layers, double lambda = 0.5);

GcniiStack make_gcnii_stack(const std::string& prefix, Index d_in, Index d, Index layers, double alpha, Rng& rng);
Tensor gcnii_forward(Tape& tape, GcniiStack& stack, const PropagationMatrix& prop, const Tensor& x);

// Two structurally identical GCN channels with independent weights. With a
// single channel (ablation) only channel1 exists.
struct DualChannelEncoder {
  std::vector<GcnLayer> channel1;
  std::vector<GcnLayer> channel2;

  bool dual() const { return !channel2.empty(); }
  void collect(std::vector<Parameter*>& out);
};

DualChannelEncoder make_dual_encoder(Index d_in, Index hidden, Index depth, bool dual, Rng& rng);

struct ChannelOutputs {
  Tensor first;
  std::optional<Tensor> second;
};

ChannelOutputs encode_dual(Tape& tape, DualChannelEncoder& enc, const PropagationMatrix& prop, const Tensor& x);

}  // namespace hcl
