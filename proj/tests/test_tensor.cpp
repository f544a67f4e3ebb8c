#include "hcl/errors.hpp"
#include "hcl/tensor.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <array>
#include <limits>

using namespace hcl;

namespace {

std::mt19937_64 rng(42);

Parameter param(const char* name, Index r, Index c) { return Parameter(name, oracle::gaussian(r, c, rng)); }

// Projects any tensor to a scalar with fixed random weights so every output
// entry contributes a distinct gradient.
Tensor probe_sum(Tape& tape, const Tensor& t, std::uint64_t seed = 7) {
  std::mt19937_64 r(seed);
  const Matrix w = oracle::gaussian(t.rows(), t.cols(), r);
  return sum_all(hadamard(t, tape.constant(w)));
}

}  // namespace

TEST_CASE("matmul and transpose values") {
  Tape tape;
  Matrix a(2, 3), b(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  b << 1, 0, 0, 1, 1, 1;
  const Tensor c = matmul(tape.constant(a), tape.constant(b));
  Matrix expect(2, 2);
  expect << 4, 5, 10, 11;
  CHECK(c.value().isApprox(expect));
  CHECK(transpose(c).value().isApprox(expect.transpose()));
}

TEST_CASE("shape mismatches raise DimensionError") {
  Tape tape;
  const Tensor a = tape.constant(Matrix::Ones(2, 3));
  const Tensor b = tape.constant(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_AS(add(a, tape.constant(Matrix::Ones(3, 2))), DimensionError);
  CHECK_THROWS_AS(scale_rows(a, tape.constant(Matrix::Ones(3, 1))), DimensionError);
  CHECK_THROWS_AS(slice_cols(a, 2, 2), DimensionError);
}

TEST_CASE("backward needs a scalar") {
  Tape tape;
  const Tensor a = tape.constant(Matrix::Ones(2, 2));
  CHECK_THROWS(tape.backward(a));
}

TEST_CASE("gradients of elementwise and matrix primitives") {
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<Index> dim(1, 5);
    const Index n = dim(rng), m = dim(rng), k = dim(rng);
    Parameter a = param("a", n, m), b = param("b", n, m), c = param("c", m, k), s = param("s", 1, 1);
    Parameter col = param("col", n, 1);
    std::vector<Parameter*> ps{&a, &b, &c, &s, &col};
    const auto fn = [&](Tape& t) {
      const Tensor A = t.parameter(a), B = t.parameter(b), C = t.parameter(c), S = t.parameter(s), Col = t.parameter(col);
      Tensor x = add(hadamard(A, sigmoid(B)), scale(sub(A, B), 0.3));
      x = add(x, scale(tanh(A), S));
      x = add(x, log_sigmoid(B));
      x = add(x, prelu(A, S));
      x = add_scalar(x, 0.5);
      x = scale_rows(x, Col);
      Tensor y = matmul(x, C);
      y = add(y, transpose(transpose(y)));
      y = softmax_rows(y);
      Tensor z = add(mean_rows(A), mean_rows(exp(scale(B, 0.1))));
      z = log(add_scalar(sigmoid(z), 0.1));
      return add(probe_sum(t, y), probe_sum(t, z, 9));
    };
    const auto r = oracle::check_gradients(ps, fn);
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("gradients of gather, slice, concat and spmm") {
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 6, d = 4;
    Parameter a = param("a", n, d);
    const auto adj = std::make_shared<SparseMatrix>(oracle::random_graph(n, 0.4, rng));
    std::vector<Index> rows{0, 2, 2, 5};
    std::vector<Parameter*> ps{&a};
    const auto fn = [&](Tape& t) {
      const Tensor A = t.parameter(a);
      const Tensor prop = spmm(adj, A);
      const std::array<Tensor, 2> parts{slice_cols(prop, 1, 2), slice_cols(A, 0, 1)};
      const Tensor cat = concat_cols(parts);
      return probe_sum(t, gather_rows(cat, rows));
    };
    CHECK(oracle::check_gradients(ps, fn).max_rel < 1e-4);
  }
}

TEST_CASE("parameters reused on one tape accumulate") {
  Parameter w("w", Matrix::Constant(1, 1, 3.0));
  Tape t;
  const Tensor a = t.parameter(w);
  const Tensor b = t.parameter(w);
  t.backward(hadamard(a, b));
  CHECK(w.grad(0, 0) == doctest::Approx(6.0));
  CHECK(t.size() == 0);
}

TEST_CASE("stable sigmoid helpers survive extreme inputs") {
  CHECK(stable_sigmoid(-1000) == 0.0);
  CHECK(stable_sigmoid(1000) == 1.0);
  CHECK(stable_log_sigmoid(-1000) == doctest::Approx(-1000));
  CHECK(std::isfinite(stable_log_sigmoid(1000)));
  Tape t;
  Matrix big(1, 2);
  big << 800, -800;
  const Tensor s = softmax_rows(t.constant(big));
  CHECK(s.value().allFinite());
  CHECK(s.value().sum() == doctest::Approx(1.0));
}

TEST_CASE("exp overflow and log of nonpositive values raise NumericalError") {
  Tape t;
  CHECK_THROWS_AS(exp(t.constant(Matrix::Constant(1, 1, 1000.0))), NumericalError);
  CHECK_THROWS_AS(log(t.constant(Matrix::Zero(1, 1))), NumericalError);
}

TEST_CASE("first_non_finite names the offending node") {
  Tape t;
  t.constant(Matrix::Ones(1, 1), "fine");
  t.constant(Matrix::Constant(1, 1, std::numeric_limits<double>::quiet_NaN()), "broken");
  const auto bad = t.first_non_finite();
  REQUIRE(bad);
  CHECK(bad->first == 1);
  CHECK(bad->second == "broken");
}
