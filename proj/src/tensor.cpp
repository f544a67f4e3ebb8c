#include "hcl/tensor.hpp"

#include "hcl/errors.hpp"

#include <cmath>
#include <sstream>

namespace hcl {

namespace {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_scalar(const char* op, const Tensor& s) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw DimensionError(std::string(op) + ": expected 1x1 scalar, got " + shape_str(s));
  }
}

void require_nonempty(const char* op, const Tensor& a) {
  if (a.rows() == 0 || a.cols() == 0) {
    throw PreconditionError(std::string(op) + ": empty tensor " + shape_str(a));
  }
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Index Tensor::rows() const { return value().rows(); }
Index Tensor::cols() const { return value().cols(); }
const Matrix& Tensor::value() const { return tape_->value_of(id_); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw ContractError("item(): tensor is " + shape_str(*this) + ", not 1x1");
  }
  return value()(0, 0);
}

// ---- Tape ------------------------------------------------------------------

Tensor Tape::constant(Matrix value, const char* label) {
  Node n;
  n.value = std::move(value);
  n.op = label;
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.op = "parameter";
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Matrix value, const char* op, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  return record(std::move(value), op, std::span<const Tensor>(inputs.begin(), inputs.size()), std::move(fn));
}

Tensor Tape::record(Matrix value, const char* op, std::span<const Tensor> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (const Tensor& in : inputs) {
    if (&in.tape() != this) throw ContractError(std::string(op) + ": operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Tensor& loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + shape_str(loss));
  }
  accumulate(loss.id(), Matrix::Ones(1, 1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      // The closure may append to other nodes' grads but never to this one.
      const Matrix g = std::move(n.grad);
      n.backward(*this, g);
    }
  }
  clear();
}

void Tape::clear() { nodes_.clear(); }

std::optional<std::pair<std::size_t, std::string>> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.allFinite()) {
      std::string name = nodes_[i].op;
      if (nodes_[i].param != nullptr) name += " '" + nodes_[i].param->name + "'";
      return std::make_pair(i, name);
    }
  }
  return std::nullopt;
}

// ---- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a) + " x " + shape_str(b));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() * b.value(), "matmul", {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value_of(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value_of(ia).transpose() * g);
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value().transpose(), "transpose", {a},
                         [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Tensor spmm(std::shared_ptr<const SparseMatrix> op, const Tensor& a) {
  if (op->cols() != a.rows()) {
    std::ostringstream os;
    os << "spmm: operator is " << op->rows() << "x" << op->cols() << ", operand is " << shape_str(a);
    throw DimensionError(os.str());
  }
  const std::size_t ia = a.id();
  Matrix out = (*op) * a.value();
  return a.tape().record(std::move(out), "spmm", {a}, [ia, op](Tape& t, const Matrix& g) {
    t.accumulate(ia, op->transpose() * g);
  });
}

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), "add", {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), "sub", {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape("hadamard", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), "hadamard", {a, b},
                         [ia, ib](Tape& t, const Matrix& g) {
                           if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value_of(ib)));
                           if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value_of(ia)));
                         });
}

Tensor scale(const Tensor& a, double s) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value() * s, "scale", {a}, [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Tensor scale(const Tensor& a, const Tensor& s) {
  require_scalar("scale", s);
  const std::size_t ia = a.id(), is = s.id();
  return a.tape().record(a.value() * s.item(), "scale_by", {a, s}, [ia, is](Tape& t, const Matrix& g) {
    const double sv = t.value_of(is)(0, 0);
    if (t.requires_grad(ia)) t.accumulate(ia, g * sv);
    if (t.requires_grad(is)) t.accumulate(is, Matrix::Constant(1, 1, g.cwiseProduct(t.value_of(ia)).sum()));
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value().array() + s, "add_scalar", {a}, [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double x) {
  // log(sigmoid(x)) = -softplus(-x)
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

Tensor sigmoid(const Tensor& a) {
  const std::size_t self_next = a.tape().size();
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), "sigmoid", {a}, [ia, self_next](Tape& t, const Matrix& g) {
    const Matrix& y = t.value_of(self_next);
    t.accumulate(ia, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Tensor log_sigmoid(const Tensor& a) {
  Matrix out = a.value().unaryExpr([](double x) { return stable_log_sigmoid(x); });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), "log_sigmoid", {a}, [ia](Tape& t, const Matrix& g) {
    // d/dx log sigmoid(x) = sigmoid(-x)
    const Matrix d = t.value_of(ia).unaryExpr([](double x) { return stable_sigmoid(-x); });
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

Tensor prelu(const Tensor& a, const Tensor& slope) {
  require_scalar("prelu", slope);
  const double s = slope.item();
  Matrix out = a.value().unaryExpr([s](double x) { return x >= 0 ? x : s * x; });
  const std::size_t ia = a.id(), is = slope.id();
  return a.tape().record(std::move(out), "prelu", {a, slope}, [ia, is](Tape& t, const Matrix& g) {
    const Matrix& x = t.value_of(ia);
    const double sv = t.value_of(is)(0, 0);
    if (t.requires_grad(ia)) {
      t.accumulate(ia, g.cwiseProduct(x.unaryExpr([sv](double v) { return v >= 0 ? 1.0 : sv; })));
    }
    if (t.requires_grad(is)) {
      const double ds = g.cwiseProduct(x.unaryExpr([](double v) { return v >= 0 ? 0.0 : v; })).sum();
      t.accumulate(is, Matrix::Constant(1, 1, ds));
    }
  });
}

Tensor tanh(const Tensor& a) {
  const std::size_t self_next = a.tape().size();
  Matrix out = a.value().array().tanh().matrix();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), "tanh", {a}, [ia, self_next](Tape& t, const Matrix& g) {
    const Matrix& y = t.value_of(self_next);
    t.accumulate(ia, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Tensor exp(const Tensor& a) {
  Matrix out = a.value().array().exp().matrix();
  if (!out.allFinite()) throw NumericalError("exp: overflow (input entry too large)");
  const std::size_t self_next = a.tape().size();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), "exp", {a}, [ia, self_next](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.value_of(self_next)));
  });
}

Tensor log(const Tensor& a) {
  if ((a.value().array() <= 0.0).any()) throw NumericalError("log: non-positive entry");
  Matrix out = a.value().array().log().matrix();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), "log", {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseQuotient(t.value_of(ia)));
  });
}

// ---- reductions --------------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
  Matrix out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const double m = a.value().row(i).maxCoeff();
    out.row(i) = (a.value().row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  const std::size_t self_next = a.tape().size();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), "softmax_rows", {a}, [ia, self_next](Tape& t, const Matrix& g) {
    const Matrix& y = t.value_of(self_next);
    // dx = y * (g - rowsum(g*y))
    const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = g;
    dx.colwise() -= dots;
    t.accumulate(ia, dx.cwiseProduct(y));
  });
}

Tensor mean_rows(const Tensor& a) {
  require_nonempty("mean_rows", a);
  const Index n = a.rows();
  const std::size_t ia = a.id();
  return a.tape().record(a.value().colwise().mean(), "mean_rows", {a}, [ia, n](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.replicate(n, 1) / static_cast<double>(n));
  });
}

Tensor sum_all(const Tensor& a) {
  const Index r = a.rows(), c = a.cols();
  const std::size_t ia = a.id();
  return a.tape().record(Matrix::Constant(1, 1, a.value().sum()), "sum_all", {a},
                         [ia, r, c](Tape& t, const Matrix& g) { t.accumulate(ia, Matrix::Constant(r, c, g(0, 0))); });
}

// ---- shape mixing --------------------------------------------------------------

Tensor gather_rows(const Tensor& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= a.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[k]) + " outside " + shape_str(a));
    }
    out.row(static_cast<Index>(k)) = a.value().row(rows[k]);
  }
  const std::size_t ia = a.id();
  const Index n = a.rows(), d = a.cols();
  std::vector<Index> idx(rows.begin(), rows.end());
  return a.tape().record(std::move(out), "gather_rows", {a}, [ia, n, d, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix dx = Matrix::Zero(n, d);
    for (std::size_t k = 0; k < idx.size(); ++k) dx.row(idx[k]) += g.row(static_cast<Index>(k));
    t.accumulate(ia, dx);
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != a.rows()) {
    throw DimensionError("scale_rows: need " + std::to_string(a.rows()) + "x1 scale column, got " + shape_str(s));
  }
  Matrix out = s.value().col(0).asDiagonal() * a.value();
  const std::size_t ia = a.id(), is = s.id();
  return a.tape().record(std::move(out), "scale_rows", {a, s}, [ia, is](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, t.value_of(is).col(0).asDiagonal() * g);
    if (t.requires_grad(is)) t.accumulate(is, g.cwiseProduct(t.value_of(ia)).rowwise().sum());
  });
}

Tensor slice_cols(const Tensor& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_str(a));
  }
  const std::size_t ia = a.id();
  const Index n = a.rows(), d = a.cols();
  return a.tape().record(a.value().middleCols(begin, count), "slice_cols", {a},
                         [ia, n, d, begin, count](Tape& t, const Matrix& g) {
                           Matrix dx = Matrix::Zero(n, d);
                           dx.middleCols(begin, count) = g;
                           t.accumulate(ia, dx);
                         });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw PreconditionError("concat_cols: no operands");
  const Index n = parts.front().rows();
  Index total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != n) throw DimensionError("concat_cols: row counts differ, " + shape_str(parts.front()) + " vs " + shape_str(p));
    total += p.cols();
  }
  Matrix out(n, total);
  std::vector<std::pair<std::size_t, Index>> layout;
  Index at = 0;
  for (const Tensor& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    layout.emplace_back(p.id(), p.cols());
    at += p.cols();
  }
  Tape& tape = parts.front().tape();
  return tape.record(std::move(out), "concat_cols", parts, [layout = std::move(layout)](Tape& t, const Matrix& g) {
    Index off = 0;
    for (const auto& [id, c] : layout) {
      t.accumulate(id, g.middleCols(off, c));
      off += c;
    }
  });
}

}  // namespace hcl
