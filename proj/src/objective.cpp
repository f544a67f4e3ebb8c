#include "hcl/objective.hpp"

#include "hcl/errors.hpp"

namespace hcl {

Discriminator make_discriminator(const std::string& name, Index dim, Rng& rng) {
  const auto f = static_cast<double>(dim);
  return Discriminator{Parameter(name, xavier_uniform(dim, dim, rng, f * f, f))};
}

Tensor readout(const Tensor& h) {
  if (h.rows() == 0) throw PreconditionError("readout: no node rows");
  return sigmoid(mean_rows(h));
}

Tensor discriminate(Tape& tape, Discriminator& d, const Tensor& h_node, const Tensor& s) {
  if (s.rows() != 1) throw DimensionError("discriminate: summary must be a single row");
  return matmul(matmul(h_node, tape.parameter(d.weight)), transpose(s));
}

Tensor mix_channels(const Tensor& h1, const std::optional<Tensor>& h2, const std::optional<Tensor>& delta) {
  if (!h2) return h1;
  if (!delta) throw PreconditionError("mix_channels: second channel given without a delta");
  return add(h1, scale(*h2, *delta));
}

Tensor contrastive_loss(Tape& tape, Discriminator& d, const Tensor& pos, const Tensor& neg, LossReduction reduction) {
  if (pos.rows() != neg.rows()) {
    throw PreconditionError("scale_loss: " + std::to_string(pos.rows()) + " positive vs " + std::to_string(neg.rows()) +
                            " negative rows");
  }
  const Tensor s = readout(pos);
  const Tensor pos_term = sum_all(log_sigmoid(discriminate(tape, d, pos, s)));
  // log(1 - sigmoid(x)) = log sigmoid(-x)
  const Tensor neg_term = sum_all(log_sigmoid(scale(discriminate(tape, d, neg, s), -1.0)));
  const double factor = reduction == LossReduction::mean ? 1.0 / (2.0 * static_cast<double>(pos.rows())) : 1.0;
  return scale(add(pos_term, neg_term), -factor);
}

Tensor scale_loss(Tape& tape, Discriminator& d, const Tensor& h1_pos, const std::optional<Tensor>& h2_pos,
                  const Tensor& h1_neg, const std::optional<Tensor>& h2_neg, const std::optional<Tensor>& delta,
                  LossReduction reduction) {
  return contrastive_loss(tape, d, mix_channels(h1_pos, h2_pos, delta), mix_channels(h1_neg, h2_neg, delta), reduction);
}

std::vector<double> ratio_weights(std::span<const double> ratios) {
  std::vector<double> w{1.0};
  double running = 1.0;
  for (double r : ratios) {
    running *= r;
    w.push_back(running);
  }
  return w;
}

Tensor total_loss(std::span<const Tensor> scale_losses, std::span<const double> ratios) {
  if (scale_losses.size() != ratios.size() + 1) {
    throw ContractError("total_loss: need one more scale loss than ratios, got " + std::to_string(scale_losses.size()) +
                        " losses and " + std::to_string(ratios.size()) + " ratios");
  }
  const std::vector<double> w = ratio_weights(ratios);
  Tensor total = scale_losses[0];
  for (std::size_t k = 1; k < scale_losses.size(); ++k) total = add(total, scale(scale_losses[k], w[k]));
  return total;
}

}  // namespace hcl
