#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hcl {

using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

// A learnable matrix that outlives any single tape. Gradients accumulate into
// `grad` on every backward pass until zero_grad() is called.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid until the tape is
// cleared.
class Tensor {
public:
  Tensor() = default;

  Index rows() const;
  Index cols() const;
  const Matrix& value() const;
  // Scalar value of a 1x1 tensor.
  double item() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode computation record. Every primitive appends one entry whose
// inputs were recorded earlier, so reverse iteration is a valid topological
// order. Single-owner; not thread-safe.
class Tape {
public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value, const char* label = "constant");
  Tensor parameter(Parameter& p);

  // Propagates d(loss)/d(node) back through the record, adds the result to
  // every Parameter::grad reached, then clears the tape.
  void backward(const Tensor& loss);
  void clear();

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
  const char* op_of(std::size_t id) const { return nodes_[id].op; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Index and op name of the first recorded value with a NaN/Inf entry, if any.
  std::optional<std::pair<std::size_t, std::string>> first_non_finite() const;

  // Used by primitives.
  Tensor record(Matrix value, const char* op, std::initializer_list<Tensor> inputs, BackwardFn fn);
  Tensor record(Matrix value, const char* op, std::span<const Tensor> inputs, BackwardFn fn);
  void accumulate(std::size_t id, const Matrix& g);

private:
  struct Node {
    Matrix value;
    Matrix grad;
    const char* op = "";
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

// ---- primitives ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Constant sparse operator applied from the left: op * a.
Tensor spmm(std::shared_ptr<const SparseMatrix> op, const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Multiplies every entry of `a` by the 1x1 tensor `s`.
Tensor scale(const Tensor& a, const Tensor& s);
Tensor add_scalar(const Tensor& a, double s);

Tensor sigmoid(const Tensor& a);
Tensor log_sigmoid(const Tensor& a);
// max(x,0) + slope*min(x,0) with a learnable 1x1 slope.
Tensor prelu(const Tensor& a, const Tensor& slope);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

Tensor softmax_rows(const Tensor& a);
Tensor mean_rows(const Tensor& a);
Tensor sum_all(const Tensor& a);

// Explicit shape-mixing operations.
Tensor gather_rows(const Tensor& a, std::span<const Index> rows);
// Row i of `a` multiplied by entry i of the n x 1 column `s`.
Tensor scale_rows(const Tensor& a, const Tensor& s);
Tensor slice_cols(const Tensor& a, Index begin, Index count);
Tensor concat_cols(std::span<const Tensor> parts);

// Numerically stable scalar helpers shared with evaluation code.
double stable_sigmoid(double x);
double stable_log_sigmoid(double x);

}  // namespace hcl
