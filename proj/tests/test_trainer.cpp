#include "hcl/errors.hpp"
#include "hcl/model.hpp"
#include "hcl/trainer.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

using namespace hcl;
namespace fs = std::filesystem;

namespace {

std::mt19937_64 data_rng(21);

TrainConfig tiny_config() {
  TrainConfig c;
  c.hidden_dim = 8;
  c.heads = 2;
  c.gcnii_layers = 1;
  c.pool_ratios = {0.8, 0.5};
  c.max_epochs = 15;
  c.patience = 100;
  c.lr = 0.01;
  c.seed = 3;
  return c;
}

Graph tiny_graph(Index n = 20, Index d = 4) {
  Graph g;
  g.adjacency = oracle::random_graph(n, 0.2, data_rng);
  g.features = oracle::gaussian(n, d, data_rng);
  return g;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hcl_test_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("config text round-trips") {
  TrainConfig c = tiny_config();
  c.input_mode = InputMode::diffusion;
  c.loss_reduction = LossReduction::sum;
  c.gcnii_alpha = 0.123456789012345;
  const TrainConfig back = TrainConfig::parse(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.gcnii_alpha == c.gcnii_alpha);
  CHECK(content_hash(c.to_text()) == content_hash(back.to_text()));
  CHECK(content_hash("a") != content_hash("b"));
  CHECK(content_hash("a").size() == 16);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(TrainConfig::parse("hidden_dim = 8\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("hidden_dim = eight\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("hidden_dim\n"), ConfigError);
  TrainConfig c;
  c.pool_ratios = {0.9, 1.5};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.hidden_dim = 10;  // not a multiple of 4 heads
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.truncate_scales(2);
  CHECK(c.pool_ratios == std::vector<double>{0.9});
  CHECK_THROWS_AS(c.truncate_scales(5), ConfigError);
  const TrainConfig parsed = TrainConfig::parse("# comment\n\npool_ratios = \nlr = 0\n");
  CHECK(parsed.pool_ratios.empty());
  CHECK(parsed.lr == 0.0);
}

TEST_CASE("model layout") {
  HclModel m = HclModel::create(tiny_config(), 4);
  CHECK(m.num_scales() == 3);
  CHECK(m.pools.size() == 2);
  CHECK(m.deltas.size() == 3);
  CHECK(m.deltas[0].value(0, 0) == 1.0);
  const auto ps = m.parameters();
  std::set<std::string> names;
  for (const Parameter* p : ps) names.insert(p->name);
  CHECK(names.size() == ps.size());
  CHECK(names.count("pool1.head0.Wq") == 1);
  CHECK(names.count("disc2.W") == 1);

  TrainConfig single = tiny_config();
  single.channels = 1;
  CHECK(HclModel::create(single, 4).deltas.empty());
  HclModel again = HclModel::create(tiny_config(), 4);
  CHECK(again.parameters()[0]->value == m.parameters()[0]->value);
}

TEST_CASE("pyramid follows the pooling cascade") {
  TrainConfig c = tiny_config();
  c.pool_ratios = {0.9, 0.8, 0.7};
  HclModel m = HclModel::create(c, 4);
  const Graph g = tiny_graph(100);
  Tape tape;
  const PropagationMatrix prop = normalize_adjacency(g.adjacency);
  const Matrix neg = corrupt_features(g.features, 1);
  const ScalePyramid pyr = forward_pyramid(tape, m, GraphView(g), prop, &neg);
  REQUIRE(pyr.levels.size() == 4);
  const std::vector<Index> sizes{100, 90, 72, 51};
  const Matrix dense = Matrix(g.adjacency);
  for (std::size_t k = 0; k < 4; ++k) {
    const ScaleLevel& l = pyr.levels[k];
    CHECK(static_cast<Index>(l.origin.size()) == sizes[k]);
    CHECK(l.mixed.rows() == sizes[k]);
    CHECK(l.negative->first.rows() == sizes[k]);
    const Matrix a = Matrix(l.adjacency);
    CHECK(a == a.transpose());
    for (std::size_t i = 0; i < l.origin.size(); ++i) {
      for (std::size_t j = 0; j < l.origin.size(); ++j) CHECK(a(Index(i), Index(j)) == dense(l.origin[i], l.origin[j]));
    }
  }
  const PyramidLoss loss = pyramid_loss(tape, m, pyr);
  CHECK(loss.per_scale.size() == 4);
  CHECK(std::isfinite(loss.total.item()));
}

TEST_CASE("end-to-end pyramid gradients") {
  TrainConfig c = tiny_config();
  c.hidden_dim = 4;
  HclModel m = HclModel::create(c, 3);
  const Graph g = tiny_graph(10, 3);
  const PropagationMatrix prop = normalize_adjacency(g.adjacency);
  const Matrix neg = corrupt_features(g.features, 2);
  const auto r = oracle::check_gradients(m.parameters(), [&](Tape& t) {
    const ScalePyramid pyr = forward_pyramid(t, m, GraphView(g), prop, &neg);
    return pyramid_loss(t, m, pyr).total;
  }, 1e-5, 6, 1);
  INFO(r.worst);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("Adam first step moves each coordinate by lr") {
  Parameter p("p", Matrix::Constant(2, 1, 1.0));
  p.grad << 3.0, -0.001;
  Adam adam(0.1);
  std::vector<Parameter*> ps{&p};
  adam.step(ps);
  CHECK(p.value(0, 0) == doctest::Approx(0.9));
  CHECK(p.value(1, 0) == doctest::Approx(1.1).epsilon(1e-4));
  // minimizes a quadratic
  Parameter q("q", Matrix::Constant(1, 1, 5.0));
  Adam opt(0.1);
  std::vector<Parameter*> qs{&q};
  for (int i = 0; i < 500; ++i) {
    q.grad = 2 * q.value;
    opt.step(qs);
  }
  CHECK(std::abs(q.value(0, 0)) < 0.05);
}

TEST_CASE("training is deterministic and restores the best epoch") {
  const Graph g = tiny_graph();
  HclModel a = HclModel::create(tiny_config(), 4);
  HclModel b = HclModel::create(tiny_config(), 4);
  const TrainResult ra = train(a, GraphView(g));
  const TrainResult rb = train(b, GraphView(g));
  REQUIRE(ra.trace.size() == 15);
  for (std::size_t i = 0; i < ra.trace.size(); ++i) CHECK(ra.trace[i].total_loss == rb.trace[i].total_loss);
  CHECK(embed(a, GraphView(g)) == embed(b, GraphView(g)));
  CHECK(ra.best_loss == ra.trace[static_cast<std::size_t>(ra.best_epoch)].total_loss);
  for (const auto& rec : ra.trace) {
    for (double d : rec.deltas) CHECK(std::abs(d) <= 1.0);
  }
}

TEST_CASE("early stopping and zero learning rate") {
  const Graph g = tiny_graph();
  TrainConfig c = tiny_config();
  c.lr = 0.0;
  c.patience = 3;
  HclModel m = HclModel::create(c, 4);
  const Matrix before = m.parameters()[0]->value;
  const TrainResult r = train(m, GraphView(g));
  CHECK(r.stopped_early);
  CHECK(r.trace.size() < 15);
  CHECK(m.parameters()[0]->value == before);
}

TEST_CASE("non-finite loss raises NumericalError") {
  const Graph g = tiny_graph();
  HclModel m = HclModel::create(tiny_config(), 4);
  m.discriminators[0].weight.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train(m, GraphView(g)), NumericalError);
}

TEST_CASE("embedding fusion variants") {
  const Graph g = tiny_graph();
  TrainConfig c = tiny_config();
  c.embed_fusion = EmbedFusion::concat;
  HclModel m = HclModel::create(c, 4);
  CHECK(embed(m, GraphView(g)).cols() == 16);
  c.embed_fusion = EmbedFusion::mix;
  HclModel mix = HclModel::create(c, 4);
  CHECK(embed(mix, GraphView(g)).cols() == 8);
  CHECK_THROWS_AS(embed(mix, GraphView(tiny_graph(20, 5))), VersionError);
}

TEST_CASE("checkpoint round-trip") {
  const Graph g = tiny_graph();
  HclModel m = HclModel::create(tiny_config(), 4);
  train(m, GraphView(g));
  const fs::path dir = scratch("ckpt");
  save_checkpoint(m, dir / "a.bin");
  HclModel back = load_checkpoint(dir / "a.bin");
  const auto pa = m.parameters(), pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  save_checkpoint(back, dir / "b.bin");
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
  CHECK(embed(m, GraphView(g)) == embed(back, GraphView(g)));

  std::string bytes = slurp(dir / "a.bin");
  bytes[8] = 9;  // version field
  std::ofstream(dir / "bad.bin", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.bin"), VersionError);
  std::ofstream(dir / "short.bin", std::ios::binary) << slurp(dir / "a.bin").substr(0, 100);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), VersionError);

  TrainConfig other = tiny_config();
  other.hidden_dim = 6;
  HclModel wrong = HclModel::create(other, 4);
  CHECK_THROWS_AS(load_checkpoint_into(wrong, dir / "a.bin"), VersionError);
}

TEST_CASE("loss trace csv") {
  const Graph g = tiny_graph();
  HclModel m = HclModel::create(tiny_config(), 4);
  const TrainResult r = train(m, GraphView(g));
  const fs::path dir = scratch("trace");
  write_loss_trace(r, dir / "t.csv");
  std::ifstream in(dir / "t.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,total_loss,scale0_loss,scale1_loss,scale2_loss,delta0,delta1,delta2");
  Index lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == static_cast<Index>(r.trace.size()));
}

TEST_CASE("multi-graph training skips trivial graphs") {
  const Graph a = tiny_graph(15), b = tiny_graph(12);
  Graph single;
  single.features = Matrix::Ones(1, 4);
  single.adjacency.resize(1, 1);
  HclModel m = HclModel::create(tiny_config(), 4);
  const std::vector<GraphView> views{GraphView(a), GraphView(single), GraphView(b)};
  const TrainResult r = train(m, views);
  CHECK(r.trace.size() == 15);
  const std::vector<GraphView> none{GraphView(single)};
  CHECK_THROWS_AS(train(m, none), PreconditionError);
}
