#include "hcl/errors.hpp"
#include "hcl/graph.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

using namespace hcl;
namespace fs = std::filesystem;

namespace {

std::mt19937_64 rng(3);

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hcl_test_graph_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("normalized adjacency on a path") {
  // 0 - 1 - 2: degrees with self loops are 2, 3, 2
  const SparseMatrix a = adjacency_from_edges(3, {{0, 1, 1.0}, {1, 2, 1.0}});
  const Matrix p = Matrix(*normalize_adjacency(a).matrix);
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)));
  CHECK(p(1, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(p(0, 2) == 0.0);
  CHECK((p - p.transpose()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("isolated nodes keep a unit self loop") {
  const SparseMatrix a = adjacency_from_edges(3, {{0, 1, 1.0}});
  const Matrix p = Matrix(*normalize_adjacency(a).matrix);
  CHECK(p(2, 2) == doctest::Approx(1.0));
}

TEST_CASE("PPR diffusion matches the power series") {
  for (int trial = 0; trial < 5; ++trial) {
    const SparseMatrix a = oracle::random_graph(12, 0.25, rng);
    const Matrix dense = ppr_dense(a, 0.2);
    const Matrix series = oracle::ppr_power_series(a, 0.2);
    CHECK((dense - series).cwiseAbs().maxCoeff() < 1e-10);
    for (Index i = 0; i < dense.rows(); ++i) CHECK(dense.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sparsified diffusion keeps top_t per row and renormalizes") {
  const SparseMatrix a = oracle::random_graph(20, 0.2, rng);
  const PropagationMatrix p = ppr_diffusion(a, 0.15, 5);
  CHECK(p.kind == PropagationMatrix::Kind::ppr_diffusion);
  const Matrix dense = ppr_dense(a, 0.15);
  for (Index i = 0; i < p.matrix->rows(); ++i) {
    CHECK(p.matrix->row(i).nonZeros() == 5);
    CHECK(Matrix(p.matrix->row(i)).sum() == doctest::Approx(1.0));
    // the kept entries are the largest of the dense row
    Eigen::RowVectorXd r = dense.row(i);
    std::vector<double> sorted(r.data(), r.data() + r.size());
    std::sort(sorted.rbegin(), sorted.rend());
    for (SparseMatrix::InnerIterator it(*p.matrix, i); it; ++it) CHECK(dense(i, it.col()) >= sorted[4] - 1e-15);
  }
  CHECK_THROWS_AS(ppr_diffusion(a, 1.5, 5), PreconditionError);
}

TEST_CASE("corruption is a non-identity row permutation") {
  const Matrix x = oracle::gaussian(7, 3, rng);
  std::set<std::vector<Index>> seen;
  for (std::uint64_t s = 0; s < 50; ++s) {
    std::vector<Index> perm;
    const Matrix c = corrupt_features(x, s, &perm);
    std::vector<Index> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    std::vector<Index> iota(7);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    CHECK(perm != iota);
    for (Index i = 0; i < 7; ++i) CHECK(c.row(i) == x.row(perm[static_cast<std::size_t>(i)]));
    seen.insert(perm);
  }
  CHECK(seen.size() > 40);
  // two nodes: the only non-identity permutation is the swap
  std::vector<Index> perm;
  corrupt_features(oracle::gaussian(2, 1, rng), 5, &perm);
  CHECK(perm == std::vector<Index>{1, 0});
  CHECK_THROWS_AS(corrupt_features(oracle::gaussian(1, 2, rng), 0), PreconditionError);
  CHECK(corrupt_features(x, 9) == corrupt_features(x, 9));
}

TEST_CASE("induced subgraph and two-hop closure") {
  const SparseMatrix a = adjacency_from_edges(5, {{0, 1, 1.0}, {1, 2, 2.0}, {2, 3, 1.0}, {3, 4, 1.0}});
  const std::vector<Index> keep{1, 2, 4};
  const Matrix sub = Matrix(induced_subgraph(a, keep));
  Matrix expect = Matrix::Zero(3, 3);
  expect(0, 1) = expect(1, 0) = 2.0;
  CHECK(sub == expect);
  const std::vector<Index> bad{2, 1};
  CHECK_THROWS_AS(induced_subgraph(a, bad), PreconditionError);

  const Matrix closure = Matrix(two_hop_closure(a));
  CHECK(closure(0, 2) == 1.0);
  CHECK(closure(0, 3) == 0.0);
  CHECK(closure(1, 1) == 0.0);
  CHECK(closure == closure.transpose());
}

TEST_CASE("row normalization leaves zero rows alone") {
  Matrix x(2, 3);
  x << 1, -1, 2, 0, 0, 0;
  const Matrix r = row_normalize(x);
  CHECK(r.row(0).cwiseAbs().sum() == doctest::Approx(1.0));
  CHECK(r.row(1).isZero());
}

TEST_CASE("graph files round-trip exactly") {
  SbmParams p;
  p.nodes_per_block = 10;
  p.seed = 11;
  const Graph g = generate_sbm(p);
  const fs::path dir = scratch("roundtrip");
  save_graph_dir(g, dir);
  const Graph h = load_graph_dir(dir);
  CHECK(h.features == g.features);
  CHECK(Matrix(h.adjacency) == Matrix(g.adjacency));
  CHECK(h.labels == g.labels);
  CHECK(h.splits == g.splits);
  const fs::path dir2 = scratch("roundtrip2");
  save_graph_dir(h, dir2);
  for (const char* f : {kEdgeFile, kFeatureFile, kLabelFile, kMaskFile}) {
    std::ifstream a(dir / f), b(dir2 / f);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }
}

TEST_CASE("loader errors carry context") {
  const fs::path dir = scratch("errors");
  write(dir / kFeatureFile, "1 0\n0 1\n1 1\n");

  write(dir / kEdgeFile, "0\t1\n1\tx\n");
  try {
    load_graph(dir / kEdgeFile, dir / kFeatureFile);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }

  write(dir / kEdgeFile, "0\t1\n1\t7\n");
  CHECK_THROWS_AS(load_graph(dir / kEdgeFile, dir / kFeatureFile), IndexError);

  write(dir / kEdgeFile, "0\t1\t1.0\n1\t0\t2.0\n");
  CHECK_THROWS_AS(load_graph(dir / kEdgeFile, dir / kFeatureFile), ConflictError);

  write(dir / kEdgeFile, "0\t1\t1.0\n1\t0\t1.0\n# comment\n\n1\t2\n");
  const Graph g = load_graph(dir / kEdgeFile, dir / kFeatureFile);
  CHECK(g.num_nodes() == 3);
  CHECK(g.adjacency.nonZeros() == 4);

  write(dir / kFeatureFile, "1 0\n0 1 5\n1 1\n");
  CHECK_THROWS_AS(load_graph(dir / kEdgeFile, dir / kFeatureFile), ParseError);

  write(dir / kFeatureFile, "1 0\n0 1\n1 1\n");
  write(dir / kLabelFile, "0\n1\n");
  CHECK_THROWS_AS(load_graph(dir / kEdgeFile, dir / kFeatureFile, dir / kLabelFile), IndexError);

  const fs::path empty = scratch("missing");
  CHECK_THROWS_AS(load_graph_dir(empty), IoError);
}

TEST_CASE("SBM generator") {
  SbmParams p;
  p.seed = 4;
  const Graph g = generate_sbm(p);
  g.validate();
  CHECK(g.num_nodes() == 300);
  CHECK(g.features.cols() == 3);
  Index train = 0, val = 0, within = 0, across = 0;
  for (Index i = 0; i < 300; ++i) {
    CHECK(g.labels[static_cast<std::size_t>(i)] == i / 100);
    train += g.splits[static_cast<std::size_t>(i)] == Split::train;
    val += g.splits[static_cast<std::size_t>(i)] == Split::val;
    for (SparseMatrix::InnerIterator it(g.adjacency, i); it; ++it) (it.col() / 100 == i / 100 ? within : across)++;
  }
  CHECK(train == 30);
  CHECK(val == 30);
  CHECK(within > 3 * across);
  const Graph h = generate_sbm(p);
  CHECK(h.features == g.features);
  p.p_out = 0.5;
  CHECK_THROWS_AS(generate_sbm(p), PreconditionError);
}

TEST_CASE("validate rejects asymmetric adjacency") {
  Graph g;
  g.features = Matrix::Ones(2, 1);
  g.adjacency.resize(2, 2);
  g.adjacency.insert(0, 1) = 1.0;
  g.adjacency.makeCompressed();
  CHECK_THROWS_AS(g.validate(), PreconditionError);
}
