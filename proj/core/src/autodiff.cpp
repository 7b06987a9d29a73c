#include "causeptr/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "causeptr/error.hpp"

namespace causeptr::ad {
namespace {

void check(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw Error(ErrorCode::kDimensionMismatch, std::string(op) + ": " + detail);
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void same_tape(Var a, Var b) {
  check(a.tape == b.tape && a.tape != nullptr, "tape", "operands belong to different tapes");
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Matrix& Var::value() const { return tape->value(*this); }

Tape::Tape(const Vector& params) : params_(params) {}

Tape::Tape(const Vector& params, Vector& param_grad) : params_(params), param_grad_(&param_grad) {
  check(param_grad.size() == params.size(), "Tape", "gradient buffer size differs from params");
}

Var Tape::push(Matrix value, std::span<const Var> parents, Backward backward) {
  Node node;
  node.value = std::move(value);
  if (recording()) {
    for (Var p : parents) {
      if (nodes_[static_cast<std::size_t>(p.id)].requires_grad) node.requires_grad = true;
    }
    if (node.requires_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), std::span<const Var>{}, nullptr); }

Var Tape::parameter(const ParamRef& ref) {
  check(ref.offset + ref.size() <= static_cast<std::size_t>(params_.size()), "parameter",
        "block exceeds parameter vector");
  if (auto it = param_nodes_.find(ref.offset); it != param_nodes_.end()) {
    const Var cached{this, it->second};
    check(cached.rows() == ref.rows && cached.cols() == ref.cols, "parameter",
          "conflicting shapes for one offset");
    return cached;
  }
  Node node;
  node.value = Eigen::Map<const Matrix>(params_.data() + ref.offset, ref.rows, ref.cols);
  if (recording()) {
    node.requires_grad = true;
    node.backward = [ref](Tape& tape, int self) {
      Eigen::Map<Matrix>(tape.param_grad_->data() + ref.offset, ref.rows, ref.cols) +=
          tape.grad_of(self);
    };
  }
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(ref.offset, id);
  return Var{this, id};
}

Var Tape::gather_columns(const ParamRef& table, std::span<const int> ids) {
  check(table.offset + table.size() <= static_cast<std::size_t>(params_.size()), "gather_columns",
        "block exceeds parameter vector");
  const Eigen::Map<const Matrix> t(params_.data() + table.offset, table.rows, table.cols);
  Matrix out(table.rows, static_cast<Eigen::Index>(ids.size()));
  std::vector<int> columns(ids.begin(), ids.end());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    check(columns[j] >= 0 && columns[j] < table.cols, "gather_columns",
          "id " + std::to_string(columns[j]) + " outside table of " + std::to_string(table.cols));
    out.col(static_cast<Eigen::Index>(j)) = t.col(columns[j]);
  }
  Node node;
  node.value = std::move(out);
  if (recording()) {
    node.requires_grad = true;
    node.backward = [table, columns](Tape& tape, int self) {
      Eigen::Map<Matrix> g(tape.param_grad_->data() + table.offset, table.rows, table.cols);
      const Matrix& upstream = tape.grad_of(self);
      for (std::size_t j = 0; j < columns.size(); ++j) {
        g.col(columns[j]) += upstream.col(static_cast<Eigen::Index>(j));
      }
    };
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[static_cast<std::size_t>(v.id)];
  if (node.has_grad) return node.grad;
  return Matrix::Zero(node.value.rows(), node.value.cols());
}

void Tape::backward(Var root) {
  check(root.tape == this, "backward", "root from another tape");
  check(value(root).size() == 1, "backward", "root must be scalar, got " + shape(value(root)));
  if (!recording()) return;
  for (auto& node : nodes_) node.has_grad = false;
  accumulate(root, Matrix::Ones(1, 1));
  for (int id = root.id; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.has_grad && node.backward) node.backward(*this, id);
  }
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  check(a.cols() == b.rows(), "matmul", shape(a.value()) + " * " + shape(b.value()));
  return a.tape->push(a.value() * b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add",
        shape(a.value()) + " + " + shape(b.value()));
  return a.tape->push(a.value() + b.value(), {a, b}, [a, b](Tape& t, int self) {
    t.accumulate(a, t.grad_of(self));
    t.accumulate(b, t.grad_of(self));
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sub",
        shape(a.value()) + " - " + shape(b.value()));
  return a.tape->push(a.value() - b.value(), {a, b}, [a, b](Tape& t, int self) {
    t.accumulate(a, t.grad_of(self));
    t.accumulate(b, -t.grad_of(self));
  });
}

Var add_column(Var a, Var b) {
  same_tape(a, b);
  check(b.cols() == 1 && a.rows() == b.rows(), "add_column",
        shape(a.value()) + " + broadcast " + shape(b.value()));
  Matrix out = a.value().colwise() + b.value().col(0);
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, g.rowwise().sum());
  });
}

Var scale(Var a, double s) {
  return a.tape->push(a.value() * s, {a},
                      [a, s](Tape& t, int self) { t.accumulate(a, t.grad_of(self) * s); });
}

Var cmul(Var a, Var b) {
  same_tape(a, b);
  check(a.rows() == b.rows() && a.cols() == b.cols(), "cmul",
        shape(a.value()) + " .* " + shape(b.value()));
  return a.tape->push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  return a.tape->push(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix& y = t.value(Var{&t, self});
    t.accumulate(a, t.grad_of(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr(&sigmoid_scalar);
  return a.tape->push(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix& y = t.value(Var{&t, self});
    t.accumulate(a, t.grad_of(self).cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var transpose(Var a) {
  return a.tape->push(a.value().transpose(), {a}, [a](Tape& t, int self) {
    t.accumulate(a, t.grad_of(self).transpose());
  });
}

Var concat_rows(std::span<const Var> parts) {
  check(!parts.empty(), "concat_rows", "no operands");
  Tape* tape = parts.front().tape;
  const int cols = parts.front().cols();
  int rows = 0;
  for (Var p : parts) {
    check(p.tape == tape, "concat_rows", "operands belong to different tapes");
    check(p.cols() == cols, "concat_rows", "column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  int at = 0;
  for (Var p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return tape->push(std::move(out), parts, [saved](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    int offset = 0;
    for (Var p : saved) {
      t.accumulate(p, g.middleRows(offset, p.rows()));
      offset += p.rows();
    }
  });
}

Var slice_rows(Var a, int first, int count) {
  check(first >= 0 && count >= 0 && first + count <= a.rows(), "slice_rows",
        "rows [" + std::to_string(first) + "," + std::to_string(first + count) + ") of " +
            shape(a.value()));
  return a.tape->push(a.value().middleRows(first, count), {a},
                      [a, first, count](Tape& t, int self) {
                        Matrix g = Matrix::Zero(a.rows(), a.cols());
                        g.middleRows(first, count) = t.grad_of(self);
                        t.accumulate(a, g);
                      });
}

Var slice_cols(Var a, int first, int count) {
  check(first >= 0 && count >= 0 && first + count <= a.cols(), "slice_cols",
        "cols [" + std::to_string(first) + "," + std::to_string(first + count) + ") of " +
            shape(a.value()));
  return a.tape->push(a.value().middleCols(first, count), {a},
                      [a, first, count](Tape& t, int self) {
                        Matrix g = Matrix::Zero(a.rows(), a.cols());
                        g.middleCols(first, count) = t.grad_of(self);
                        t.accumulate(a, g);
                      });
}

Var mean_cols(Var a, int first, int last) {
  check(first >= 0 && first <= last && last < a.cols(), "mean_cols",
        "cols [" + std::to_string(first) + "," + std::to_string(last) + "] of " +
            shape(a.value()));
  const int count = last - first + 1;
  Matrix out = a.value().middleCols(first, count).rowwise().sum() / static_cast<double>(count);
  return a.tape->push(std::move(out), {a}, [a, first, count](Tape& t, int self) {
    Matrix g = Matrix::Zero(a.rows(), a.cols());
    g.middleCols(first, count).colwise() = t.grad_of(self).col(0) / static_cast<double>(count);
    t.accumulate(a, g);
  });
}

Var sum(std::span<const Var> terms) {
  check(!terms.empty(), "sum", "no operands");
  Tape* tape = terms.front().tape;
  Matrix out = terms.front().value();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    check(terms[i].tape == tape, "sum", "operands belong to different tapes");
    check(terms[i].rows() == out.rows() && terms[i].cols() == out.cols(), "sum", "shapes differ");
    out += terms[i].value();
  }
  std::vector<Var> saved(terms.begin(), terms.end());
  return tape->push(std::move(out), terms, [saved](Tape& t, int self) {
    for (Var p : saved) t.accumulate(p, t.grad_of(self));
  });
}

Var pick(Var a, int r, int c) {
  check(r >= 0 && r < a.rows() && c >= 0 && c < a.cols(), "pick",
        "(" + std::to_string(r) + "," + std::to_string(c) + ") of " + shape(a.value()));
  Matrix out(1, 1);
  out(0, 0) = a.value()(r, c);
  return a.tape->push(std::move(out), {a}, [a, r, c](Tape& t, int self) {
    Matrix g = Matrix::Zero(a.rows(), a.cols());
    g(r, c) = t.grad_of(self)(0, 0);
    t.accumulate(a, g);
  });
}

namespace {

// Shared forward for the masked softmax pair. Returns log-probabilities with
// -inf on masked entries.
Matrix masked_log_softmax_value(const Matrix& row, std::span<const std::uint8_t> mask) {
  check(row.rows() == 1 && static_cast<std::size_t>(row.cols()) == mask.size(),
        "masked_softmax", "row " + shape(row) + " vs mask of " + std::to_string(mask.size()));
  double peak = -std::numeric_limits<double>::infinity();
  bool admitted = false;
  bool poisoned = false;
  for (Eigen::Index j = 0; j < row.cols(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    admitted = true;
    if (std::isnan(row(0, j))) poisoned = true;
    peak = std::max(peak, row(0, j));
  }
  check(admitted, "masked_softmax", "mask admits no position");
  // Non-finite scores propagate as NaN so the caller sees a non-finite loss.
  if (poisoned || !std::isfinite(peak)) {
    return Matrix::Constant(1, row.cols(), std::numeric_limits<double>::quiet_NaN());
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < row.cols(); ++j) {
    if (mask[static_cast<std::size_t>(j)]) total += std::exp(row(0, j) - peak);
  }
  const double log_total = std::log(total) + peak;
  Matrix out(1, row.cols());
  for (Eigen::Index j = 0; j < row.cols(); ++j) {
    out(0, j) = mask[static_cast<std::size_t>(j)] ? row(0, j) - log_total
                                                  : -std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace

Matrix exp_log_probs(const Matrix& log_probs) {
  return log_probs.unaryExpr([](double x) { return std::isinf(x) && x < 0 ? 0.0 : std::exp(x); });
}

Var masked_log_softmax(Var row, std::span<const std::uint8_t> mask) {
  Matrix out = masked_log_softmax_value(row.value(), mask);
  return row.tape->push(std::move(out), {row}, [row](Tape& t, int self) {
    const Matrix& logp = t.value(Var{&t, self});
    const Matrix& g = t.grad_of(self);
    const Matrix p = exp_log_probs(logp);
    // Masked entries carry p = 0; ignore whatever upstream gradient they hold.
    double total = 0.0;
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      if (p(0, j) > 0.0) total += g(0, j);
    }
    Matrix d(1, g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      d(0, j) = std::isfinite(logp(0, j)) ? g(0, j) - p(0, j) * total : 0.0;
    }
    t.accumulate(row, d);
  });
}

Var masked_softmax(Var row, std::span<const std::uint8_t> mask) {
  Matrix out = exp_log_probs(masked_log_softmax_value(row.value(), mask));
  return row.tape->push(std::move(out), {row}, [row](Tape& t, int self) {
    const Matrix& p = t.value(Var{&t, self});
    const Matrix& g = t.grad_of(self);
    const double inner = (g.array() * p.array()).sum();
    t.accumulate(row, (p.array() * (g.array() - inner)).matrix());
  });
}

namespace {

struct LstmTrace {
  int hidden = 0;
  std::vector<int> order;  // visited columns, in processing order
  // Per visited step, indexed like `order`.
  std::vector<Vector> input_gate, forget_gate, candidate, output_gate;
  std::vector<Vector> cell, cell_tanh, prev_hidden, prev_cell;
};

}  // namespace

Var lstm_sequence(Var pre_activation, Var w_hh, std::span<const std::uint8_t> mask, bool reverse) {
  same_tape(pre_activation, w_hh);
  const int h = w_hh.cols();
  const int steps = pre_activation.cols();
  check(w_hh.rows() == 4 * h, "lstm_sequence", "recurrent weights " + shape(w_hh.value()));
  check(pre_activation.rows() == 4 * h, "lstm_sequence",
        "pre-activation " + shape(pre_activation.value()) + " for hidden " + std::to_string(h));
  check(mask.size() == static_cast<std::size_t>(steps), "lstm_sequence", "mask length");

  auto trace = std::make_shared<LstmTrace>();
  trace->hidden = h;
  for (int k = 0; k < steps; ++k) {
    const int col = reverse ? steps - 1 - k : k;
    if (mask[static_cast<std::size_t>(col)]) trace->order.push_back(col);
  }

  const Matrix& x = pre_activation.value();
  const Matrix& w = w_hh.value();
  Matrix out = Matrix::Zero(h, steps);
  Vector hidden = Vector::Zero(h);
  Vector cell = Vector::Zero(h);
  for (int col : trace->order) {
    const Vector z = x.col(col) + w * hidden;
    Vector i = z.segment(0, h).unaryExpr(&sigmoid_scalar);
    Vector f = z.segment(h, h).unaryExpr(&sigmoid_scalar);
    Vector g = z.segment(2 * h, h).array().tanh().matrix();
    Vector o = z.segment(3 * h, h).unaryExpr(&sigmoid_scalar);
    trace->prev_hidden.push_back(hidden);
    trace->prev_cell.push_back(cell);
    cell = f.cwiseProduct(cell) + i.cwiseProduct(g);
    Vector ct = cell.array().tanh().matrix();
    hidden = o.cwiseProduct(ct);
    out.col(col) = hidden;
    trace->input_gate.push_back(std::move(i));
    trace->forget_gate.push_back(std::move(f));
    trace->candidate.push_back(std::move(g));
    trace->output_gate.push_back(std::move(o));
    trace->cell.push_back(cell);
    trace->cell_tanh.push_back(std::move(ct));
  }

  return pre_activation.tape->push(
      std::move(out), {pre_activation, w_hh}, [pre_activation, w_hh, trace](Tape& t, int self) {
        const int hh = trace->hidden;
        const Matrix& upstream = t.grad_of(self);
        const Matrix& w = w_hh.value();
        Matrix dx = Matrix::Zero(4 * hh, upstream.cols());
        Matrix dw = Matrix::Zero(4 * hh, hh);
        Vector dh_next = Vector::Zero(hh);
        Vector dc_next = Vector::Zero(hh);
        for (int k = static_cast<int>(trace->order.size()) - 1; k >= 0; --k) {
          const auto s = static_cast<std::size_t>(k);
          const int col = trace->order[s];
          const Vector& i = trace->input_gate[s];
          const Vector& f = trace->forget_gate[s];
          const Vector& g = trace->candidate[s];
          const Vector& o = trace->output_gate[s];
          const Vector& ct = trace->cell_tanh[s];
          const Vector dh = upstream.col(col) + dh_next;
          const Vector dc =
              dc_next + dh.cwiseProduct(o).cwiseProduct((1.0 - ct.array().square()).matrix());
          Vector dz(4 * hh);
          dz.segment(0, hh) = (dc.array() * g.array() * i.array() * (1.0 - i.array())).matrix();
          dz.segment(hh, hh) =
              (dc.array() * trace->prev_cell[s].array() * f.array() * (1.0 - f.array())).matrix();
          dz.segment(2 * hh, hh) = (dc.array() * i.array() * (1.0 - g.array().square())).matrix();
          dz.segment(3 * hh, hh) = (dh.array() * ct.array() * o.array() * (1.0 - o.array())).matrix();
          dx.col(col) = dz;
          dw.noalias() += dz * trace->prev_hidden[s].transpose();
          dh_next.noalias() = w.transpose() * dz;
          dc_next = dc.cwiseProduct(f);
        }
        t.accumulate(pre_activation, dx);
        if (t.requires_grad(w_hh)) t.accumulate(w_hh, dw);
      });
}

}  // namespace causeptr::ad
