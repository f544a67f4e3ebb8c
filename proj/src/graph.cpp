#include "hcl/graph.hpp"

#include "hcl/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace hcl {

namespace fs = std::filesystem;

void Graph::validate() const {
  const Index n = num_nodes();
  if (adjacency.rows() != n || adjacency.cols() != n) {
    throw PreconditionError("graph: adjacency is " + std::to_string(adjacency.rows()) + "x" +
                            std::to_string(adjacency.cols()) + " but there are " + std::to_string(n) + " feature rows");
  }
  for (Index i = 0; i < n; ++i) {
    for (SparseMatrix::InnerIterator it(adjacency, i); it; ++it) {
      if (it.value() < 0) {
        throw PreconditionError("graph: negative edge weight at (" + std::to_string(i) + ", " + std::to_string(it.col()) + ")");
      }
      if (adjacency.coeff(it.col(), i) != it.value()) {
        throw PreconditionError("graph: adjacency not symmetric at (" + std::to_string(i) + ", " +
                                std::to_string(it.col()) + ")");
      }
    }
  }
  if (!labels.empty() && static_cast<Index>(labels.size()) != n) throw PreconditionError("graph: label count != node count");
  if (!splits.empty() && static_cast<Index>(splits.size()) != n) throw PreconditionError("graph: mask count != node count");
}

// ---- propagation -------------------------------------------------------------

namespace {

void require_nonnegative(const SparseMatrix& adjacency) {
  for (Index i = 0; i < adjacency.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(adjacency, i); it; ++it) {
      if (it.value() < 0) throw PreconditionError("negative edge weight at row " + std::to_string(i));
    }
  }
}

SparseMatrix with_self_loops(const SparseMatrix& adjacency) {
  SparseMatrix eye(adjacency.rows(), adjacency.cols());
  eye.setIdentity();
  SparseMatrix out = adjacency + eye;
  out.makeCompressed();
  return out;
}

}  // namespace

PropagationMatrix normalize_adjacency(const SparseMatrix& adjacency) {
  require_nonnegative(adjacency);
  SparseMatrix a = with_self_loops(adjacency);
  Eigen::VectorXd inv_sqrt(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    double deg = 0;
    for (SparseMatrix::InnerIterator it(a, i); it; ++it) deg += it.value();
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  for (Index i = 0; i < a.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(a, i); it; ++it) it.valueRef() *= inv_sqrt[i] * inv_sqrt[it.col()];
  }
  return {PropagationMatrix::Kind::normalized_adjacency, std::make_shared<const SparseMatrix>(std::move(a))};
}

Matrix ppr_dense(const SparseMatrix& adjacency, double teleport) {
  if (!(teleport > 0.0 && teleport < 1.0)) throw PreconditionError("ppr_diffusion: teleport must lie in (0, 1)");
  require_nonnegative(adjacency);
  const Index n = adjacency.rows();
  Matrix walk = Matrix(with_self_loops(adjacency));
  for (Index i = 0; i < n; ++i) walk.row(i) /= walk.row(i).sum();
  const Matrix system = Matrix::Identity(n, n) - (1.0 - teleport) * walk;
  Matrix s = teleport * system.partialPivLu().inverse();
  if (!s.allFinite()) throw NumericalError("ppr_diffusion: diffusion system could not be solved");
  return s;
}

PropagationMatrix ppr_diffusion(const SparseMatrix& adjacency, double teleport, Index top_t) {
  if (top_t < 1) throw PreconditionError("ppr_diffusion: top_t must be >= 1");
  const Matrix dense = ppr_dense(adjacency, teleport);
  const Index n = dense.rows();
  const Index keep = std::min(top_t, n);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n * keep));
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + keep, order.end(), [&](Index a, Index b) {
      const double va = dense(i, a), vb = dense(i, b);
      return va > vb || (va == vb && a < b);
    });
    double total = 0;
    for (Index k = 0; k < keep; ++k) total += dense(i, order[k]);
    for (Index k = 0; k < keep; ++k) {
      const double v = dense(i, order[k]) / total;
      if (v != 0.0) trips.emplace_back(i, order[k], v);
    }
  }
  auto s = std::make_shared<SparseMatrix>(n, n);
  s->setFromTriplets(trips.begin(), trips.end());
  s->makeCompressed();
  return {PropagationMatrix::Kind::ppr_diffusion, std::move(s)};
}

PropagationMatrix make_propagation(const SparseMatrix& adjacency, InputMode mode, const DiffusionOptions& diffusion) {
  if (mode == InputMode::diffusion) return ppr_diffusion(adjacency, diffusion.teleport, diffusion.top_t);
  return normalize_adjacency(adjacency);
}

// ---- corruption ----------------------------------------------------------------

Matrix corrupt_features(const Matrix& features, std::uint64_t seed, std::vector<Index>* permutation) {
  const Index n = features.rows();
  if (n < 2) throw PreconditionError("corrupt: need at least 2 nodes to shuffle, got " + std::to_string(n));
  std::mt19937_64 rng(seed);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  const auto is_identity = [&] {
    for (Index i = 0; i < n; ++i) {
      if (perm[static_cast<std::size_t>(i)] != i) return false;
    }
    return true;
  };
  do {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
  } while (is_identity());
  Matrix out(n, features.cols());
  for (Index i = 0; i < n; ++i) out.row(i) = features.row(perm[static_cast<std::size_t>(i)]);
  if (permutation != nullptr) *permutation = std::move(perm);
  return out;
}

Graph corrupt(const Graph& g, std::uint64_t seed) {
  Graph out;
  out.features = corrupt_features(g.features, seed);
  out.adjacency = g.adjacency;
  return out;
}

Matrix row_normalize(const Matrix& features) {
  Matrix out = features;
  for (Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).cwiseAbs().sum();
    if (s > 0) out.row(i) /= s;
  }
  return out;
}

// ---- structure -----------------------------------------------------------------

SparseMatrix adjacency_from_edges(Index n, const std::vector<std::tuple<Index, Index, double>>& edges) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(edges.size() * 2);
  for (const auto& [u, v, w] : edges) {
    if (u < 0 || u >= n || v < 0 || v >= n) {
      throw IndexError("edge (" + std::to_string(u) + ", " + std::to_string(v) + ") outside node range [0, " +
                       std::to_string(n) + ")");
    }
    trips.emplace_back(u, v, w);
    if (u != v) trips.emplace_back(v, u, w);
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  return a;
}

SparseMatrix induced_subgraph(const SparseMatrix& adjacency, std::span<const Index> keep) {
  std::vector<Index> position(static_cast<std::size_t>(adjacency.rows()), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (k > 0 && keep[k] <= keep[k - 1]) throw PreconditionError("induced_subgraph: indices must be strictly increasing");
    position[static_cast<std::size_t>(keep[k])] = static_cast<Index>(k);
  }
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    for (SparseMatrix::InnerIterator it(adjacency, keep[k]); it; ++it) {
      const Index p = position[static_cast<std::size_t>(it.col())];
      if (p >= 0) trips.emplace_back(static_cast<Index>(k), p, it.value());
    }
  }
  const auto m = static_cast<Index>(keep.size());
  SparseMatrix out(m, m);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

SparseMatrix two_hop_closure(const SparseMatrix& adjacency) {
  SparseMatrix pattern = adjacency;
  for (Index i = 0; i < pattern.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(pattern, i); it; ++it) it.valueRef() = 1.0;
  }
  SparseMatrix reach = SparseMatrix(pattern * pattern) + pattern;
  std::vector<Eigen::Triplet<double>> trips;
  for (Index i = 0; i < reach.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(reach, i); it; ++it) {
      if (it.col() != i && it.value() > 0) trips.emplace_back(i, it.col(), 1.0);
    }
  }
  SparseMatrix out(adjacency.rows(), adjacency.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

// ---- files -------------------------------------------------------------------------

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct FeatureTable {
  Matrix values;
  bool has_header = false;
};

FeatureTable read_features(const fs::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::pair<Index, Index>> dims;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("#dims", 0) == 0) {
      std::istringstream hs(line.substr(5));
      Index n = -1, d = -1;
      if (!(hs >> n >> d) || n < 0 || d < 0) throw ParseError(path.string(), lineno, "malformed '#dims n d' header");
      dims = {n, d};
      continue;
    }
    if (skip_line(line)) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(path.string(), lineno, "not a number: '" + tok + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path.string(), lineno,
                       "expected " + std::to_string(rows.front().size()) + " columns, got " + std::to_string(row.size()));
    }
    if (dims && static_cast<Index>(row.size()) != dims->second) {
      throw ParseError(path.string(), lineno, "expected " + std::to_string(dims->second) + " columns per #dims header");
    }
    rows.push_back(std::move(row));
  }
  if (dims && static_cast<Index>(rows.size()) != dims->first) {
    throw ParseError(path.string(), lineno,
                     "#dims header declares " + std::to_string(dims->first) + " rows, file has " + std::to_string(rows.size()));
  }
  FeatureTable t;
  t.has_header = dims.has_value();
  const Index d = dims ? dims->second : (rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  t.values.resize(static_cast<Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Index j = 0; j < d; ++j) t.values(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  return t;
}

std::vector<std::string> read_node_lines(const fs::path& path, Index n) {
  std::ifstream in = open_input(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (skip_line(line)) continue;
    out.push_back(trim(line));
  }
  if (static_cast<Index>(out.size()) != n) {
    throw IndexError(path.string() + ": expected " + std::to_string(n) + " lines (one per node), got " +
                     std::to_string(out.size()));
  }
  return out;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Graph load_graph(const fs::path& edge_path, const fs::path& feature_path, const std::optional<fs::path>& label_path,
                 const std::optional<fs::path>& mask_path) {
  Graph g;
  FeatureTable table = read_features(feature_path);
  g.features = std::move(table.values);
  const Index n = g.features.rows();

  std::ifstream in = open_input(edge_path);
  std::map<std::pair<Index, Index>, double> seen;
  std::vector<std::tuple<Index, Index, double>> edges;
  std::string line;
  std::size_t lineno = 0;
  Index max_id = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    std::istringstream ls(line);
    long long u = 0, v = 0;
    double w = 1.0;
    if (!(ls >> u >> v)) throw ParseError(edge_path.string(), lineno, "expected 'src<TAB>dst[<TAB>weight]'");
    if (!(ls >> w)) {
      if (!ls.eof()) throw ParseError(edge_path.string(), lineno, "malformed weight");
      w = 1.0;
    }
    std::string rest;
    if (ls >> rest) throw ParseError(edge_path.string(), lineno, "trailing field '" + rest + "'");
    if (u < 0 || v < 0) throw IndexError(edge_path.string() + ":" + std::to_string(lineno) + ": negative node id");
    if (u >= n || v >= n) {
      throw IndexError(edge_path.string() + ":" + std::to_string(lineno) + ": node id " + std::to_string(std::max(u, v)) +
                       " outside [0, " + std::to_string(n) + ") given " + std::to_string(n) + " feature rows");
    }
    if (!(w >= 0.0) || !std::isfinite(w)) throw ParseError(edge_path.string(), lineno, "edge weight must be finite and >= 0");
    const std::pair<Index, Index> key{std::min<Index>(u, v), std::max<Index>(u, v)};
    if (auto it = seen.find(key); it != seen.end()) {
      if (it->second != w) {
        throw ConflictError(edge_path.string() + ":" + std::to_string(lineno) + ": edge (" + std::to_string(u) + ", " +
                            std::to_string(v) + ") repeated with different weight");
      }
      continue;
    }
    seen.emplace(key, w);
    edges.emplace_back(u, v, w);
    max_id = std::max<Index>(max_id, std::max<Index>(u, v));
  }
  if (!table.has_header && max_id + 1 != n) {
    throw IndexError(feature_path.string() + ": " + std::to_string(n) + " feature rows but highest node id is " +
                     std::to_string(max_id) + " (add a '#dims n d' header for trailing isolated nodes)");
  }
  g.adjacency = adjacency_from_edges(n, edges);

  if (label_path) {
    for (const std::string& s : read_node_lines(*label_path, n)) {
      try {
        std::size_t used = 0;
        const int y = std::stoi(s, &used);
        if (used != s.size() || y < -1) throw std::invalid_argument(s);
        g.labels.push_back(y);
      } catch (const std::exception&) {
        throw ParseError(label_path->string(), g.labels.size() + 1, "bad class id '" + s + "'");
      }
    }
  }
  if (mask_path) {
    for (const std::string& s : read_node_lines(*mask_path, n)) {
      if (s == "train") g.splits.push_back(Split::train);
      else if (s == "val") g.splits.push_back(Split::val);
      else if (s == "test") g.splits.push_back(Split::test);
      else if (s == "none") g.splits.push_back(Split::none);
      else throw ParseError(mask_path->string(), g.splits.size() + 1, "expected train|val|test|none, got '" + s + "'");
    }
  }
  g.validate();
  return g;
}

Graph load_graph_dir(const fs::path& dir) {
  const fs::path edges = dir / kEdgeFile, features = dir / kFeatureFile;
  for (const fs::path& p : {edges, features}) {
    if (!fs::exists(p)) throw IoError("missing graph file " + p.string());
  }
  std::optional<fs::path> labels, masks;
  if (fs::exists(dir / kLabelFile)) labels = dir / kLabelFile;
  if (fs::exists(dir / kMaskFile)) masks = dir / kMaskFile;
  return load_graph(edges, features, labels, masks);
}

void save_graph_dir(const Graph& g, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / kEdgeFile);
    if (!out) throw IoError("cannot write " + (dir / kEdgeFile).string());
    for (Index i = 0; i < g.adjacency.outerSize(); ++i) {
      for (SparseMatrix::InnerIterator it(g.adjacency, i); it; ++it) {
        if (it.col() < i) continue;
        out << i << '\t' << it.col();
        if (it.value() != 1.0) out << '\t' << format_real(it.value());
        out << '\n';
      }
    }
  }
  {
    std::ofstream out(dir / kFeatureFile);
    if (!out) throw IoError("cannot write " + (dir / kFeatureFile).string());
    out << "#dims " << g.features.rows() << ' ' << g.features.cols() << '\n';
    for (Index i = 0; i < g.features.rows(); ++i) {
      for (Index j = 0; j < g.features.cols(); ++j) out << (j ? "\t" : "") << format_real(g.features(i, j));
      out << '\n';
    }
  }
  if (g.has_labels()) {
    std::ofstream out(dir / kLabelFile);
    for (int y : g.labels) out << y << '\n';
  }
  if (!g.splits.empty()) {
    std::ofstream out(dir / kMaskFile);
    static constexpr const char* names[] = {"none", "train", "val", "test"};
    for (Split s : g.splits) out << names[static_cast<int>(s)] << '\n';
  }
}

// ---- synthetic -------------------------------------------------------------------

Graph generate_sbm(const SbmParams& p) {
  if (p.blocks < 1 || p.nodes_per_block < 1) throw PreconditionError("generate_sbm: need blocks >= 1 and nodes_per_block >= 1");
  if (!(p.p_out >= 0.0 && p.p_out < p.p_in && p.p_in <= 1.0)) {
    throw PreconditionError("generate_sbm: need 0 <= p_out < p_in <= 1");
  }
  if (!(p.feature_noise >= 0.0)) throw PreconditionError("generate_sbm: feature_noise must be >= 0");

  const Index n = p.blocks * p.nodes_per_block;
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Graph g;
  g.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) g.labels[static_cast<std::size_t>(i)] = static_cast<int>(i / p.nodes_per_block);

  std::vector<std::tuple<Index, Index, double>> edges;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double prob = g.labels[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(j)] ? p.p_in : p.p_out;
      if (unit(rng) < prob) edges.emplace_back(i, j, 1.0);
    }
  }
  g.adjacency = adjacency_from_edges(n, edges);

  g.features = Matrix::Zero(n, p.blocks);
  for (Index i = 0; i < n; ++i) {
    g.features(i, g.labels[static_cast<std::size_t>(i)]) = 1.0;
    for (Index j = 0; j < p.blocks; ++j) g.features(i, j) += p.feature_noise * gauss(rng);
  }

  g.splits.assign(static_cast<std::size_t>(n), Split::test);
  const auto n_train = static_cast<Index>(std::lround(0.1 * static_cast<double>(p.nodes_per_block)));
  const Index n_val = n_train;
  for (Index b = 0; b < p.blocks; ++b) {
    std::vector<Index> members(static_cast<std::size_t>(p.nodes_per_block));
    std::iota(members.begin(), members.end(), b * p.nodes_per_block);
    std::shuffle(members.begin(), members.end(), rng);
    for (Index k = 0; k < p.nodes_per_block; ++k) {
      Split s = Split::test;
      if (k < n_train) s = Split::train;
      else if (k < n_train + n_val) s = Split::val;
      g.splits[static_cast<std::size_t>(members[static_cast<std::size_t>(k)])] = s;
    }
  }
  return g;
}

}  // namespace hcl
