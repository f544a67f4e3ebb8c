#include "hcl/eval.hpp"

#include "hcl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace hcl {

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

Matrix rows_of(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

std::vector<int> labels_of(std::span<const int> labels, const std::vector<Index>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (Index r : rows) out.push_back(labels[static_cast<std::size_t>(r)]);
  return out;
}

Matrix standardized(const Matrix& x) {
  Matrix out = x;
  for (Index j = 0; j < x.cols(); ++j) {
    const double m = x.col(j).mean();
    const double var = (x.col(j).array() - m).square().mean();
    const double s = var > 1e-24 ? std::sqrt(var) : 1.0;
    out.col(j) = (x.col(j).array() - m) / s;
  }
  return out;
}

std::vector<int> predict(const Matrix& x, const ProbeModel& m) {
  const Matrix logits = (x * m.weight).rowwise() + m.bias;
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    Index best = 0;
    logits.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace

// ---- probe ------------------------------------------------------------------------

double probe_objective(const Matrix& x, std::span<const int> labels, const ProbeModel& model, double l2, ProbeModel* grad) {
  const Index m = x.rows();
  if (static_cast<Index>(labels.size()) != m) throw DimensionError("probe_objective: one label per row required");
  if (m == 0) throw PreconditionError("probe_objective: no rows");
  Matrix logits = (x * model.weight).rowwise() + model.bias;
  double loss = 0;
  for (Index i = 0; i < m; ++i) {
    const double mx = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - mx).exp().matrix();
    const double z = logits.row(i).sum();
    logits.row(i) /= z;
    loss -= std::log(logits(i, labels[static_cast<std::size_t>(i)]));
  }
  loss = loss / static_cast<double>(m) + 0.5 * l2 * model.weight.squaredNorm();
  if (grad != nullptr) {
    // logits now holds softmax probabilities
    for (Index i = 0; i < m; ++i) logits(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    logits /= static_cast<double>(m);
    grad->weight = x.transpose() * logits + l2 * model.weight;
    grad->bias = logits.colwise().sum();
  }
  return loss;
}

ProbeResult linear_probe(const Matrix& embeddings, std::span<const int> labels, std::span<const Split> splits, Index runs,
                         std::uint64_t seed, const ProbeOptions& options) {
  const Index n = embeddings.rows();
  if (static_cast<Index>(labels.size()) != n || static_cast<Index>(splits.size()) != n) {
    throw DimensionError("linear_probe: labels and splits need one entry per embedding row");
  }
  if (runs < 1) throw PreconditionError("linear_probe: runs must be >= 1");
  std::vector<Index> train_rows, val_rows, test_rows;
  int classes = 0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0) continue;
    classes = std::max(classes, y + 1);
    switch (splits[static_cast<std::size_t>(i)]) {
      case Split::train: train_rows.push_back(i); break;
      case Split::val: val_rows.push_back(i); break;
      case Split::test: test_rows.push_back(i); break;
      case Split::none: break;
    }
  }
  if (train_rows.empty() || test_rows.empty()) throw PreconditionError("linear_probe: need labelled train and test nodes");
  std::vector<bool> in_train(static_cast<std::size_t>(classes), false);
  for (Index r : train_rows) in_train[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])] = true;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y >= 0 && splits[static_cast<std::size_t>(i)] != Split::none && !in_train[static_cast<std::size_t>(y)]) {
      throw PreconditionError("linear_probe: class " + std::to_string(y) + " has no training node (stratification error)");
    }
  }

  const Matrix x = options.standardize ? standardized(embeddings) : embeddings;
  const Matrix x_train = rows_of(x, train_rows), x_test = rows_of(x, test_rows);
  const std::vector<int> y_train = labels_of(labels, train_rows), y_test = labels_of(labels, test_rows);
  const bool has_val = !val_rows.empty();
  const Matrix x_val = has_val ? rows_of(x, val_rows) : x_train;
  const std::vector<int> y_val = has_val ? labels_of(labels, val_rows) : y_train;

  ProbeResult result;
  result.runs = runs;
  for (Index run = 0; run < runs; ++run) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(run));
    std::normal_distribution<double> init(0.0, 0.01);
    ProbeModel model{Matrix(x.cols(), classes), Eigen::RowVectorXd::Zero(classes)};
    for (Index i = 0; i < model.weight.rows(); ++i) {
      for (Index j = 0; j < model.weight.cols(); ++j) model.weight(i, j) = init(rng);
    }
    ProbeModel best = model;
    double best_val = -1.0;
    ProbeModel grad;
    for (Index it = 0; it <= options.iterations; ++it) {
      if (it % options.eval_every == 0 || it == options.iterations) {
        const double v = accuracy(predict(x_val, model), y_val);
        if (v > best_val) {
          best_val = v;
          best = model;
        }
      }
      if (it == options.iterations) break;
      probe_objective(x_train, y_train, model, options.l2, &grad);
      model.weight -= options.learning_rate * grad.weight;
      model.bias -= options.learning_rate * grad.bias;
    }
    result.per_run.push_back(accuracy(predict(x_test, best), y_test));
  }
  result.accuracy_mean = mean_of(result.per_run);
  result.accuracy_std = std_of(result.per_run);
  return result;
}

std::vector<Split> stratified_split(std::span<const int> labels, Index train_per_class, Index val_per_class,
                                    std::uint64_t seed) {
  std::map<int, std::vector<Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) by_class[labels[i]].push_back(static_cast<Index>(i));
  }
  std::vector<Split> out(labels.size(), Split::none);
  std::mt19937_64 rng(seed);
  for (auto& [cls, members] : by_class) {
    if (static_cast<Index>(members.size()) <= train_per_class) {
      throw PreconditionError("stratified_split: class " + std::to_string(cls) + " has too few nodes");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      const auto kk = static_cast<Index>(k);
      out[static_cast<std::size_t>(members[k])] =
          kk < train_per_class ? Split::train : (kk < train_per_class + val_per_class ? Split::val : Split::test);
    }
  }
  return out;
}

// ---- k-means ------------------------------------------------------------------------

double inertia(const Matrix& points, std::span<const int> assignment, Index k) {
  Matrix centroids = Matrix::Zero(k, points.cols());
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < points.rows(); ++i) {
    centroids.row(assignment[static_cast<std::size_t>(i)]) += points.row(i);
    ++counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])];
  }
  for (Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  double total = 0;
  for (Index i = 0; i < points.rows(); ++i) {
    total += (points.row(i) - centroids.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return total;
}

namespace {

Index count_distinct_rows(const Matrix& points) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(points.rows()));
  for (Index i = 0; i < points.rows(); ++i) {
    for (Index j = 0; j < points.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(points(i, j));
  }
  std::sort(rows.begin(), rows.end());
  return static_cast<Index>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

KMeansResult lloyd(const Matrix& points, Index k, std::mt19937_64& rng, const KMeansOptions& options) {
  const Index n = points.rows();
  // greedy k-means++ seeding: 2 + ln k candidates per step, keep the one
  // that lowers the potential most
  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Eigen::VectorXd dist2(n);
  for (Index i = 0; i < n; ++i) dist2[i] = (points.row(i) - centroids.row(0)).squaredNorm();
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
  Eigen::VectorXd cand(n), best_dist(n);
  for (Index c = 1; c < k; ++c) {
    std::discrete_distribution<Index> pick(dist2.data(), dist2.data() + n);
    double best_potential = std::numeric_limits<double>::infinity();
    Index best = 0;
    for (int t = 0; t < trials; ++t) {
      const Index idx = pick(rng);
      for (Index i = 0; i < n; ++i) cand[i] = std::min(dist2[i], (points.row(i) - points.row(idx)).squaredNorm());
      if (cand.sum() < best_potential) {
        best_potential = cand.sum();
        best = idx;
        best_dist = cand;
      }
    }
    centroids.row(c) = points.row(best);
    dist2 = best_dist;
  }

  KMeansResult r;
  r.assignment.assign(static_cast<std::size_t>(n), 0);
  for (Index it = 0; it < options.max_iterations; ++it) {
    double total = 0;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) {
        const double d = (points.row(i) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      r.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
      total += best_d;
    }
    r.inertia_trace.push_back(total);
    r.iterations = it + 1;

    Matrix next = Matrix::Zero(k, points.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      next.row(r.assignment[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(r.assignment[static_cast<std::size_t>(i)])];
    }
    double shift = 0;
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        next.row(c) = centroids.row(c);  // empty cluster keeps its centroid
      } else {
        next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
      shift = std::max(shift, (next.row(c) - centroids.row(c)).norm());
    }
    centroids = std::move(next);
    if (shift < options.tolerance) break;
  }
  r.centroids = std::move(centroids);
  r.inertia = inertia(points, r.assignment, k);
  return r;
}

}  // namespace

std::vector<KMeansResult> kmeans_restarts(const Matrix& points, Index k, Index runs, std::uint64_t seed,
                                          const KMeansOptions& options) {
  if (k < 2) throw PreconditionError("kmeans: k must be >= 2");
  if (points.rows() < k) throw PreconditionError("kmeans: fewer points than clusters");
  if (runs < 1) throw PreconditionError("kmeans: runs must be >= 1");
  if (count_distinct_rows(points) < k) throw PreconditionError("kmeans: fewer distinct points than k (degenerate clusters)");
  std::vector<KMeansResult> out;
  for (Index r = 0; r < runs; ++r) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(r));
    out.push_back(lloyd(points, k, rng, options));
  }
  return out;
}

KMeansResult kmeans(const Matrix& points, Index k, Index runs, std::uint64_t seed, const KMeansOptions& options) {
  std::vector<KMeansResult> all = kmeans_restarts(points, k, runs, seed, options);
  std::size_t best = 0;
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].inertia < all[best].inertia) best = i;
  }
  return std::move(all[best]);
}

// ---- NMI / ARI ------------------------------------------------------------------------

namespace {

struct Contingency {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> rows, cols;
  double n = 0;
};

Contingency contingency(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw DimensionError("clustering metrics: label vectors differ in length");
  if (pred.empty()) throw PreconditionError("clustering metrics: empty label vectors");
  Contingency c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    c.joint[{pred[i], truth[i]}] += 1;
    c.rows[pred[i]] += 1;
    c.cols[truth[i]] += 1;
  }
  c.n = static_cast<double>(pred.size());
  return c;
}

double entropy(const std::map<int, double>& counts, double n) {
  double h = 0;
  for (const auto& [_, c] : counts) h -= (c / n) * std::log(c / n);
  return h;
}

double choose2(double x) { return x * (x - 1) / 2; }

}  // namespace

double nmi(std::span<const int> pred, std::span<const int> truth) {
  const Contingency c = contingency(pred, truth);
  const double hp = entropy(c.rows, c.n), ht = entropy(c.cols, c.n);
  if (hp <= 0 || ht <= 0) return 0.0;
  double mi = 0;
  for (const auto& [key, nij] : c.joint) {
    mi += (nij / c.n) * std::log(c.n * nij / (c.rows.at(key.first) * c.cols.at(key.second)));
  }
  return std::clamp(mi / std::sqrt(hp * ht), 0.0, 1.0);
}

double ari(std::span<const int> pred, std::span<const int> truth) {
  const Contingency c = contingency(pred, truth);
  double index = 0, a = 0, b = 0;
  for (const auto& [_, nij] : c.joint) index += choose2(nij);
  for (const auto& [_, ni] : c.rows) a += choose2(ni);
  for (const auto& [_, nj] : c.cols) b += choose2(nj);
  const double expected = a * b / choose2(c.n);
  const double max_index = 0.5 * (a + b);
  if (max_index == expected) return 1.0;  // both partitions trivial
  return (index - expected) / (max_index - expected);
}

ClusterResult cluster_embeddings(const Matrix& embeddings, std::span<const int> labels, Index k, Index runs,
                                 std::uint64_t seed) {
  if (static_cast<Index>(labels.size()) != embeddings.rows()) throw DimensionError("cluster: one label per row required");
  std::vector<Index> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) rows.push_back(static_cast<Index>(i));
  }
  const Matrix points = rows_of(embeddings, rows);
  const std::vector<int> truth = labels_of(labels, rows);
  std::vector<double> nmis, aris;
  for (Index r = 0; r < runs; ++r) {
    const KMeansResult km = kmeans(points, k, 1, seed + static_cast<std::uint64_t>(r));
    nmis.push_back(nmi(km.assignment, truth));
    aris.push_back(ari(km.assignment, truth));
  }
  return {mean_of(nmis), mean_of(aris), std_of(nmis), std_of(aris), runs};
}

// ---- graph level ----------------------------------------------------------------------

Matrix graph_level_embed(std::span<const Matrix> node_embeddings) {
  if (node_embeddings.empty()) throw PreconditionError("graph_level_embed: no graphs");
  const Index d = node_embeddings.front().cols();
  Matrix out(static_cast<Index>(node_embeddings.size()), d);
  for (std::size_t g = 0; g < node_embeddings.size(); ++g) {
    const Matrix& h = node_embeddings[g];
    if (h.rows() == 0) throw PreconditionError("graph_level_embed: graph " + std::to_string(g) + " has no nodes");
    if (h.cols() != d) throw DimensionError("graph_level_embed: embedding widths differ");
    out.row(static_cast<Index>(g)) = h.colwise().mean();
  }
  return out;
}

std::vector<std::vector<Split>> stratified_kfold(std::span<const int> labels, Index folds, std::uint64_t seed) {
  if (folds < 2) throw PreconditionError("stratified_kfold: need at least 2 folds");
  std::map<int, std::vector<Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<Index>(i));
  std::vector<Index> fold_of(labels.size(), 0);
  std::mt19937_64 rng(seed);
  Index offset = 0;
  for (auto& [_, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      fold_of[static_cast<std::size_t>(members[k])] = (offset + static_cast<Index>(k)) % folds;
    }
    offset += static_cast<Index>(members.size());
  }
  std::vector<std::vector<Split>> out(static_cast<std::size_t>(folds), std::vector<Split>(labels.size(), Split::train));
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(fold_of[i])][i] = Split::test;
  return out;
}

ProbeResult graph_classification(const Matrix& graph_embeddings, std::span<const int> labels, Index folds,
                                 std::uint64_t seed, const ProbeOptions& options) {
  const auto masks = stratified_kfold(labels, folds, seed);
  ProbeResult r;
  for (std::size_t f = 0; f < masks.size(); ++f) {
    const ProbeResult one = linear_probe(graph_embeddings, labels, masks[f], 1, seed + f, options);
    r.per_run.push_back(one.accuracy_mean);
  }
  r.runs = static_cast<Index>(r.per_run.size());
  r.accuracy_mean = mean_of(r.per_run);
  r.accuracy_std = std_of(r.per_run);
  return r;
}

// ---- files ------------------------------------------------------------------------------

std::string format_real(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void write_embeddings(const Matrix& embeddings, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << embeddings.rows() << ' ' << embeddings.cols() << '\n';
  for (Index i = 0; i < embeddings.rows(); ++i) {
    for (Index j = 0; j < embeddings.cols(); ++j) out << (j ? "\t" : "") << format_real(embeddings(i, j));
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Matrix read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string(), 1, "missing 'n d' header");
  std::istringstream hs(line);
  Index n = 0, d = 0;
  if (!(hs >> n >> d) || n < 0 || d < 0) throw ParseError(path.string(), 1, "malformed 'n d' header");
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw ParseError(path.string(), static_cast<std::size_t>(i + 2), "missing row");
    std::istringstream ls(line);
    for (Index j = 0; j < d; ++j) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError(path.string(), static_cast<std::size_t>(i + 2), "too few columns");
      try {
        m(i, j) = std::stod(tok);
      } catch (const std::exception&) {
        throw ParseError(path.string(), static_cast<std::size_t>(i + 2), "not a number: '" + tok + "'");
      }
    }
  }
  return m;
}

void Report::section(const std::string& name) { text_ += (text_.empty() ? "[" : "\n[") + name + "]\n"; }

void Report::add(const std::string& key, const std::string& value) { text_ += key + " = " + value + "\n"; }

void Report::add(const std::string& key, double value) { add(key, format_real(value)); }

void Report::add_block(const std::string& key, const std::string& multiline) {
  std::istringstream in(multiline);
  std::string line;
  while (std::getline(in, line)) text_ += key + "." + line + "\n";
}

void Report::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text_;
}

}  // namespace hcl
