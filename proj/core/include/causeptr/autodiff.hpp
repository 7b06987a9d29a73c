#pragma once

// Reverse-mode differentiation over dense matrices. A Tape records every
// operation of one forward pass; backward() walks it in reverse and adds
// parameter gradients into a caller-owned flat vector.
//
// Vectors are columns. Sequences are matrices with one column per position.

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace causeptr::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A column-major rows x cols block inside a flat parameter vector.
struct ParamRef {
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  int rows() const { return static_cast<int>(value().rows()); }
  int cols() const { return static_cast<int>(value().cols()); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  /// Forward-only tape: nothing is recorded for backward.
  explicit Tape(const Vector& params);
  /// Recording tape; gradients are accumulated into param_grad.
  Tape(const Vector& params, Vector& param_grad);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var zeros(int rows, int cols) { return constant(Matrix::Zero(rows, cols)); }

  /// Leaf bound to a parameter block. Repeated calls return the same node.
  Var parameter(const ParamRef& ref);

  /// Columns table[:, ids[j]] of a parameter block (an embedding lookup).
  Var gather_columns(const ParamRef& table, std::span<const int> ids);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  /// Gradient of the last backward() root w.r.t. v (zeros if unreached).
  Matrix grad(Var v) const;

  /// Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);

  bool recording() const { return param_grad_ != nullptr; }
  std::size_t size() const { return nodes_.size(); }

  // Operation plumbing.
  Var push(Matrix value, std::span<const Var> parents, Backward backward);
  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
  }
  const Matrix& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  /// grad(v) += delta when v takes part in differentiation.
  template <typename Expr>
  void accumulate(Var v, const Expr& delta) {
    Node& node = nodes_[static_cast<std::size_t>(v.id)];
    if (!node.requires_grad) return;
    if (!node.has_grad) {
      node.grad = delta;
      node.has_grad = true;
    } else {
      node.grad += delta;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  const Vector& params_;
  Vector* param_grad_ = nullptr;
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, int> param_nodes_;
};

// Operations. Shapes are checked; mismatches throw kDimensionMismatch.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// a (r x T) plus column b (r x 1) broadcast across columns.
Var add_column(Var a, Var b);
Var scale(Var a, double s);
Var cmul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var transpose(Var a);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, int first, int count);
Var slice_cols(Var a, int first, int count);
/// Mean of columns [first, last] (inclusive) as a column vector.
Var mean_cols(Var a, int first, int last);
/// Sum of same-shape terms in the given order.
Var sum(std::span<const Var> terms);
/// Scalar a(r, c) as a 1x1 node.
Var pick(Var a, int r, int c);
/// Log-softmax over a 1 x T row restricted to mask; masked entries are -inf.
Var masked_log_softmax(Var row, std::span<const std::uint8_t> mask);
Var masked_softmax(Var row, std::span<const std::uint8_t> mask);
/// Elementwise exp that maps -inf to exactly 0. Eigen's vectorized exp clamps
/// its argument and would leave a denormal on masked positions.
Matrix exp_log_probs(const Matrix& log_probs);

/// Unidirectional LSTM over the columns of pre_activation (4h x T) whose mask
/// entry is set, visiting them right-to-left when reverse is true. Gates are
/// stacked [input; forget; candidate; output]; the recurrent term W_hh * h is
/// added inside. Initial state is zero. Masked columns of the result are zero.
Var lstm_sequence(Var pre_activation, Var w_hh, std::span<const std::uint8_t> mask, bool reverse);

}  // namespace causeptr::ad
