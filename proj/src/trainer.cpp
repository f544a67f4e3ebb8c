#include "hcl/trainer.hpp"

#include "hcl/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace hcl {

namespace {

std::optional<Tensor> delta_for(Tape& tape, HclModel& model, std::size_t scale) {
  if (model.deltas.empty()) return std::nullopt;
  return tape.parameter(model.deltas.at(scale));
}

}  // namespace

ScalePyramid forward_pyramid(Tape& tape, HclModel& model, const GraphView& graph, const PropagationMatrix& prop,
                             const Matrix* negative_features) {
  const Index n = graph.num_nodes();
  if (graph.features.cols() != model.input_dim) {
    throw DimensionError("forward_pyramid: graph has " + std::to_string(graph.features.cols()) +
                         " feature columns, model expects " + std::to_string(model.input_dim));
  }
  if (prop.size() != n) throw DimensionError("forward_pyramid: propagation matrix does not match node count");
  if (negative_features != nullptr &&
      (negative_features->rows() != n || negative_features->cols() != graph.features.cols())) {
    throw DimensionError("forward_pyramid: negative features shape differs from the graph features");
  }

  const PoolOptions pool_options{model.config.pool_gate, model.config.adjacency_closure, model.config.input_mode,
                                 model.config.diffusion()};
  ScalePyramid pyr;
  {
    ScaleLevel level;
    level.origin.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) level.origin[static_cast<std::size_t>(i)] = i;
    level.adjacency = graph.adjacency;
    level.prop = prop;
    level.features = tape.constant(graph.features, "features");
    level.positive = encode_dual(tape, model.encoder, prop, level.features);
    level.mixed = mix_channels(level.positive.first, level.positive.second, delta_for(tape, model, 0));
    if (negative_features != nullptr) {
      level.negative_features = tape.constant(*negative_features, "corrupted_features");
      level.negative = encode_dual(tape, model.encoder, prop, *level.negative_features);
    }
    pyr.levels.push_back(std::move(level));
  }

  for (std::size_t k = 0; k < model.pools.size(); ++k) {
    const ScaleLevel& parent = pyr.levels.back();
    ScaleLevel child;
    PoolResult pooled = coarsen(tape, model.pools[k], parent.mixed, parent.features, parent.prop, parent.adjacency,
                                pool_options);
    child.selected = std::move(pooled.selected);
    child.origin.reserve(child.selected.size());
    for (Index s : child.selected) child.origin.push_back(parent.origin[static_cast<std::size_t>(s)]);
    child.adjacency = std::move(pooled.child_adjacency);
    child.prop = std::move(pooled.child_prop);
    child.features = pooled.child_features;
    child.scores = pooled.scores;
    child.positive = encode_dual(tape, model.encoder, child.prop, child.features);
    child.mixed = mix_channels(child.positive.first, child.positive.second, delta_for(tape, model, k + 1));
    if (parent.negative_features) {
      // The corrupted branch reuses the positive selection and gate.
      child.negative_features = gate_rows(*parent.negative_features, child.selected, pooled.scores, pool_options.gate);
      child.negative = encode_dual(tape, model.encoder, child.prop, *child.negative_features);
    }
    pyr.levels.push_back(std::move(child));
  }
  return pyr;
}

PyramidLoss pyramid_loss(Tape& tape, HclModel& model, const ScalePyramid& pyramid) {
  if (pyramid.levels.size() != model.discriminators.size()) {
    throw ContractError("pyramid_loss: pyramid has " + std::to_string(pyramid.levels.size()) + " levels, model has " +
                        std::to_string(model.discriminators.size()) + " discriminators");
  }
  PyramidLoss out;
  for (std::size_t k = 0; k < pyramid.levels.size(); ++k) {
    const ScaleLevel& level = pyramid.levels[k];
    if (!level.negative) throw ContractError("pyramid_loss: pyramid was built without a corrupted branch");
    const Tensor neg = mix_channels(level.negative->first, level.negative->second, delta_for(tape, model, k));
    out.per_scale.push_back(contrastive_loss(tape, model.discriminators[k], level.mixed, neg, model.config.loss_reduction));
  }
  out.total = total_loss(out.per_scale, model.config.pool_ratios);
  return out;
}

// ---- optimizer -------------------------------------------------------------------

void Adam::step(std::span<Parameter* const> params) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw ContractError("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    const Matrix update = (m_[i] / c1).array() / ((v_[i] / c2).array().sqrt() + eps_);
    p.value -= lr_ * update;
  }
}

// ---- training --------------------------------------------------------------------

Matrix prepare_features(const TrainConfig& config, const Matrix& features) {
  return config.row_normalize_features ? row_normalize(features) : features;
}

std::uint64_t corruption_seed(std::uint64_t run_seed, Index epoch, Index graph_index) {
  // splitmix64 finalizer over a combination of the three inputs
  std::uint64_t z = run_seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1) +
                    0xBF58476D1CE4E5B9ULL * static_cast<std::uint64_t>(graph_index);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::vector<Matrix> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

[[noreturn]] void abort_non_finite(const Tape& tape, Index epoch) {
  std::string where = "unknown tensor";
  if (auto bad = tape.first_non_finite()) where = "tensor #" + std::to_string(bad->first) + " (" + bad->second + ")";
  throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + "; first non-finite value in " + where);
}

}  // namespace

TrainResult train(HclModel& model, const GraphView& graph, const EpochCallback& on_epoch) {
  return train(model, std::span<const GraphView>(&graph, 1), on_epoch);
}

TrainResult train(HclModel& model, std::span<const GraphView> graphs, const EpochCallback& on_epoch) {
  const TrainConfig& cfg = model.config;
  cfg.validate();

  struct Prepared {
    Matrix features;
    const SparseMatrix* adjacency;
    PropagationMatrix prop;
  };
  std::vector<Prepared> prepared;
  for (const GraphView& g : graphs) {
    if (g.num_nodes() < 2) continue;
    prepared.push_back({prepare_features(cfg, g.features), &g.adjacency,
                        make_propagation(g.adjacency, cfg.input_mode, cfg.diffusion())});
  }
  if (prepared.empty()) throw PreconditionError("train: need at least one graph with two or more nodes");

  const std::vector<Parameter*> params = model.parameters();
  Adam adam(cfg.lr);
  TrainResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_values;
  Index since_best = 0;

  for (Index epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<Matrix> start_values = snapshot(params);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.scale_losses.assign(static_cast<std::size_t>(model.num_scales()), 0.0);

    for (std::size_t gi = 0; gi < prepared.size(); ++gi) {
      const Prepared& g = prepared[gi];
      const Matrix negative = corrupt_features(g.features, corruption_seed(cfg.seed, epoch, static_cast<Index>(gi)));
      Tape tape;
      model.zero_grad();
      const GraphView view(g.features, *g.adjacency);
      const ScalePyramid pyr = forward_pyramid(tape, model, view, g.prop, &negative);
      const PyramidLoss loss = pyramid_loss(tape, model, pyr);
      const double total = loss.total.item();
      if (!std::isfinite(total)) abort_non_finite(tape, epoch);
      rec.total_loss += total / static_cast<double>(prepared.size());
      for (std::size_t k = 0; k < loss.per_scale.size(); ++k) {
        rec.scale_losses[k] += loss.per_scale[k].item() / static_cast<double>(prepared.size());
      }
      tape.backward(loss.total);
      adam.step(params);
      model.clamp_deltas();
      for (const Parameter* p : params) {
        if (!p->value.allFinite()) {
          throw NumericalError("non-finite parameter '" + p->name + "' after update at epoch " + std::to_string(epoch));
        }
      }
    }
    for (const Parameter& d : model.deltas) rec.deltas.push_back(d.value(0, 0));
    result.trace.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.total_loss < result.best_loss) {
      result.best_loss = rec.total_loss;
      result.best_epoch = epoch;
      best_values = std::move(start_values);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }

  if (!best_values.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  }
  model.zero_grad();
  return result;
}

Matrix embed(HclModel& model, const GraphView& graph) {
  if (graph.features.cols() != model.input_dim) {
    throw VersionError("embed: graph has " + std::to_string(graph.features.cols()) + " feature columns, checkpoint expects " +
                       std::to_string(model.input_dim));
  }
  const TrainConfig& cfg = model.config;
  Tape tape;
  const PropagationMatrix prop = make_propagation(graph.adjacency, cfg.input_mode, cfg.diffusion());
  const Tensor x = tape.constant(prepare_features(cfg, graph.features));
  const ChannelOutputs h = encode_dual(tape, model.encoder, prop, x);
  if (!h.second) return h.first.value();
  if (cfg.embed_fusion == EmbedFusion::concat) {
    const std::array<Tensor, 2> parts{h.first, *h.second};
    return concat_cols(parts).value();
  }
  return mix_channels(h.first, h.second, delta_for(tape, model, 0)).value();
}

void write_loss_trace(const TrainResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t scales = result.trace.empty() ? 0 : result.trace.front().scale_losses.size();
  const std::size_t deltas = result.trace.empty() ? 0 : result.trace.front().deltas.size();
  out << "epoch,total_loss";
  for (std::size_t k = 0; k < scales; ++k) out << ",scale" << k << "_loss";
  for (std::size_t k = 0; k < deltas; ++k) out << ",delta" << k;
  out << '\n';
  char buf[40];
  const auto real = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const EpochRecord& r : result.trace) {
    out << r.epoch << ',' << real(r.total_loss);
    for (double v : r.scale_losses) out << ',' << real(v);
    for (double v : r.deltas) out << ',' << real(v);
    out << '\n';
  }
}

}  // namespace hcl
