#include "hcl/encoder.hpp"

#include "hcl/errors.hpp"

#include <cmath>

namespace hcl {

Matrix xavier_uniform(Index rows, Index cols, Rng& rng, double fan_in, double fan_out) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Fill row-major so the draw order matches the checkpoint layout.
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

namespace {

Tensor activate(Tape& tape, Activation act, Parameter& slope, const Tensor& x) {
  if (act == Activation::identity) return x;
  return prelu(x, tape.parameter(slope));
}

void require_prop(const char* op, const PropagationMatrix& prop, const Tensor& x) {
  if (!prop.matrix) throw PreconditionError(std::string(op) + ": empty propagation matrix");
  if (prop.size() != x.rows()) {
    throw DimensionError(std::string(op) + ": propagation is " + std::to_string(prop.size()) + "x" +
                         std::to_string(prop.size()) + " but input has " + std::to_string(x.rows()) + " rows");
  }
}

}  // namespace

// ---- GCN -------------------------------------------------------------------

GcnLayer make_gcn_layer(const std::string& prefix, Index d_in, Index d_out, Rng& rng) {
  GcnLayer layer;
  layer.weight = Parameter(prefix + ".weight", xavier_uniform(d_in, d_out, rng));
  layer.slope = Parameter(prefix + ".slope", Matrix::Constant(1, 1, kPreluInitSlope));
  return layer;
}

Tensor gcn_forward(Tape& tape, GcnLayer& layer, const PropagationMatrix& prop, const Tensor& x) {
  require_prop("gcn_forward", prop, x);
  if (x.cols() != layer.weight.value.rows()) {
    throw DimensionError("gcn_forward: input has " + std::to_string(x.cols()) + " columns, weight expects " +
                         std::to_string(layer.weight.value.rows()));
  }
  // (prop x) W and prop (x W) are equal; multiply by W first when it shrinks the width.
  Tensor w = tape.parameter(layer.weight);
  Tensor z = layer.weight.value.cols() <= x.cols() ? spmm(prop.matrix, matmul(x, w)) : matmul(spmm(prop.matrix, x), w);
  return activate(tape, layer.activation, layer.slope, z);
}

// ---- GCNII -----------------------------------------------------------------

void GcniiStack::collect(std::vector<Parameter*>& out) {
  out.push_back(&input_projection);
  for (Layer& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.slope);
  }
}

std::vector<double> gcnii_betas(Index layers, double lambda) {
  std::vector<double> betas;
  for (Index l = 1; l <= layers; ++l) betas.push_back(std::log(lambda / static_cast<double>(l) + 1.0));
  return betas;
}

GcniiStack make_gcnii_stack(const std::string& prefix, Index d_in, Index d, Index layers, double alpha, Rng& rng) {
  if (layers < 1) throw PreconditionError("gcnii: need at least one layer");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw PreconditionError("gcnii: alpha must lie in [0, 1]");
  GcniiStack s;
  s.input_projection = Parameter(prefix + ".input", xavier_uniform(d_in, d, rng));
  for (Index l = 0; l < layers; ++l) {
    const std::string name = prefix + ".layer" + std::to_string(l);
    s.layers.push_back({Parameter(name + ".W", xavier_uniform(d, d, rng)),
                        Parameter(name + ".slope", Matrix::Constant(1, 1, kPreluInitSlope))});
  }
  s.alpha = alpha;
  s.betas = gcnii_betas(layers);
  return s;
}

Tensor gcnii_forward(Tape& tape, GcniiStack& stack, const PropagationMatrix& prop, const Tensor& x) {
  require_prop("gcnii_forward", prop, x);
  if (x.cols() != stack.input_projection.value.rows()) {
    throw DimensionError("gcnii_forward: input has " + std::to_string(x.cols()) + " columns, projection expects " +
                         std::to_string(stack.input_projection.value.rows()));
  }
  if (stack.betas.size() != stack.layers.size()) throw PreconditionError("gcnii_forward: one beta per layer required");

  const Tensor h0 = matmul(x, tape.parameter(stack.input_projection));
  const Tensor anchor = scale(h0, stack.alpha);
  Tensor h = h0;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const double beta = stack.betas[l];
    Tensor support = add(scale(spmm(prop.matrix, h), 1.0 - stack.alpha), anchor);
    // support * ((1 - beta) I + beta W) without materializing the identity.
    Tensor mapped = add(scale(support, 1.0 - beta), scale(matmul(support, tape.parameter(stack.layers[l].weight)), beta));
    h = activate(tape, stack.activation, stack.layers[l].slope, mapped);
  }
  return h;
}

// ---- dual channel ---------------------------------------------------------------

void DualChannelEncoder::collect(std::vector<Parameter*>& out) {
  for (GcnLayer& l : channel1) l.collect(out);
  for (GcnLayer& l : channel2) l.collect(out);
}

DualChannelEncoder make_dual_encoder(Index d_in, Index hidden, Index depth, bool dual, Rng& rng) {
  if (depth < 1) throw PreconditionError("encoder depth must be >= 1");
  DualChannelEncoder enc;
  const auto build = [&](const std::string& channel, std::vector<GcnLayer>& out) {
    for (Index k = 0; k < depth; ++k) {
      const std::string prefix = k == 0 ? "encoder." + channel : "encoder." + channel + ".layer" + std::to_string(k);
      out.push_back(make_gcn_layer(prefix, k == 0 ? d_in : hidden, hidden, rng));
    }
  };
  build("ch1", enc.channel1);
  if (dual) build("ch2", enc.channel2);
  return enc;
}

ChannelOutputs encode_dual(Tape& tape, DualChannelEncoder& enc, const PropagationMatrix& prop, const Tensor& x) {
  const auto run = [&](std::vector<GcnLayer>& layers) {
    Tensor h = x;
    for (GcnLayer& l : layers) h = gcn_forward(tape, l, prop, h);
    return h;
  };
  ChannelOutputs out{run(enc.channel1), std::nullopt};
  if (enc.dual()) out.second = run(enc.channel2);
  return out;
}

}  // namespace hcl
