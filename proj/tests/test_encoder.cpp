#include "hcl/encoder.hpp"
#include "hcl/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace hcl;

namespace {

std::mt19937_64 data_rng(5);

Tensor weighted_sum(Tape& t, const Tensor& x) {
  std::mt19937_64 r(1);
  return sum_all(hadamard(x, t.constant(oracle::gaussian(x.rows(), x.cols(), r))));
}

}  // namespace

TEST_CASE("xavier bounds") {
  Rng rng(0);
  const Matrix w = xavier_uniform(30, 20, rng);
  const double b = std::sqrt(6.0 / 50.0);
  CHECK(w.cwiseAbs().maxCoeff() <= b);
  CHECK(w.cwiseAbs().maxCoeff() > 0.8 * b);
  Rng a(1), c(1);
  CHECK(xavier_uniform(4, 4, a) == xavier_uniform(4, 4, c));
}

TEST_CASE("GCN layer value") {
  Rng rng(0);
  GcnLayer layer = make_gcn_layer("g", 2, 3, rng);
  CHECK(layer.slope.value(0, 0) == kPreluInitSlope);
  const SparseMatrix a = adjacency_from_edges(3, {{0, 1, 1.0}, {1, 2, 1.0}});
  const PropagationMatrix p = normalize_adjacency(a);
  const Matrix x = oracle::gaussian(3, 2, data_rng);
  Tape t;
  const Matrix out = gcn_forward(t, layer, p, t.constant(x)).value();
  const Matrix pre = Matrix(*p.matrix) * x * layer.weight.value;
  const Matrix expect = pre.unaryExpr([](double v) { return v > 0 ? v : 0.25 * v; });
  CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("GCN layer gradients") {
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    GcnLayer layer = make_gcn_layer("g", 4, 3, rng);
    const PropagationMatrix p = normalize_adjacency(oracle::random_graph(7, 0.3, data_rng));
    Parameter x("x", oracle::gaussian(7, 4, data_rng));
    std::vector<Parameter*> ps{&x};
    layer.collect(ps);
    const auto r = oracle::check_gradients(ps, [&](Tape& t) { return weighted_sum(t, gcn_forward(t, layer, p, t.parameter(x))); });
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("GCNII betas") {
  const auto b = gcnii_betas(3);
  REQUIRE(b.size() == 3);
  CHECK(b[0] == doctest::Approx(std::log(1.5)));
  CHECK(b[2] == doctest::Approx(std::log(0.5 / 3 + 1)));
}

TEST_CASE("GCNII layer matches the closed form") {
  Rng rng(2);
  GcniiStack s = make_gcnii_stack("v", 3, 4, 2, 0.1, rng);
  s.activation = Activation::identity;
  const PropagationMatrix p = normalize_adjacency(oracle::random_graph(5, 0.4, data_rng));
  const Matrix x = oracle::gaussian(5, 3, data_rng);
  Tape t;
  const Matrix out = gcnii_forward(t, s, p, t.constant(x)).value();
  const Matrix prop = Matrix(*p.matrix);
  const Matrix h0 = x * s.input_projection.value;
  Matrix h = h0;
  for (std::size_t l = 0; l < 2; ++l) {
    const Matrix support = 0.9 * prop * h + 0.1 * h0;
    const double beta = s.betas[l];
    h = support * ((1 - beta) * Matrix::Identity(4, 4) + beta * s.layers[l].weight.value);
  }
  CHECK((out - h).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("GCNII gradients") {
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(static_cast<std::uint64_t>(100 + trial));
    GcniiStack s = make_gcnii_stack("v", 3, 4, 3, 0.1, rng);
    const PropagationMatrix p = normalize_adjacency(oracle::random_graph(6, 0.4, data_rng));
    Parameter x("x", oracle::gaussian(6, 3, data_rng));
    std::vector<Parameter*> ps{&x};
    s.collect(ps);
    const auto r = oracle::check_gradients(ps, [&](Tape& t) { return weighted_sum(t, gcnii_forward(t, s, p, t.parameter(x))); });
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("dual encoder channels are independent") {
  Rng rng(0);
  DualChannelEncoder enc = make_dual_encoder(3, 8, 2, true, rng);
  CHECK(enc.dual());
  CHECK(enc.channel1.size() == 2);
  CHECK(enc.channel1[0].weight.value != enc.channel2[0].weight.value);
  std::vector<Parameter*> ps;
  enc.collect(ps);
  CHECK(ps.size() == 8);
  CHECK(ps[0]->name == "encoder.ch1.weight");

  const PropagationMatrix p = normalize_adjacency(oracle::random_graph(6, 0.4, data_rng));
  Tape t;
  const ChannelOutputs out = encode_dual(t, enc, p, t.constant(oracle::gaussian(6, 3, data_rng)));
  REQUIRE(out.second);
  CHECK(out.first.cols() == 8);
  CHECK(out.first.value() != out.second->value());

  DualChannelEncoder single = make_dual_encoder(3, 8, 1, false, rng);
  Tape t2;
  CHECK_FALSE(encode_dual(t2, single, p, t2.constant(oracle::gaussian(6, 3, data_rng))).second);
}

TEST_CASE("encoder rejects a wrong input width") {
  Rng rng(0);
  DualChannelEncoder enc = make_dual_encoder(3, 8, 1, true, rng);
  const PropagationMatrix p = normalize_adjacency(oracle::random_graph(4, 0.5, data_rng));
  Tape t;
  CHECK_THROWS_AS(encode_dual(t, enc, p, t.constant(Matrix::Ones(4, 5))), DimensionError);
}
