/*
 * Copyright 2026 The ssmtl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ssmtl/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "ssmtl/errors.hpp"

namespace ssmtl {

namespace {

constexpr std::array kAllPrimitives = {
    Primitive::kMatmul,          Primitive::kAdd,
    Primitive::kSub,             Primitive::kScale,
    Primitive::kHadamard,        Primitive::kConcatCols,
    Primitive::kRelu,            Primitive::kLeakyRelu,
    Primitive::kExp,             Primitive::kLog,
    Primitive::kRowSoftmax,      Primitive::kMaskedRowSoftmax,
    Primitive::kL2NormalizeRows, Primitive::kStandardizeColumns,
    Primitive::kFrobeniusSq,     Primitive::kRowDot,
    Primitive::kMeanScalar,      Primitive::kPower,
    Primitive::kGatherRows,      Primitive::kScatterAddRows,
    Primitive::kTranspose,       Primitive::kReshape,
    Primitive::kRowLogSoftmax,   Primitive::kSegmentSoftmax,
    Primitive::kSumScalar,
};

[[noreturn]] void shape_fail(Primitive kind, const std::string &detail) {
  throw ShapeError(std::string(primitive_name(kind)) + ": " + detail);
}

std::string shapes(const Tensor &a, const Tensor &b) {
  return a.value().shape_string() + " and " + b.value().shape_string();
}

Tape &tape_of(Primitive kind, std::span<const Tensor> inputs) {
  if (inputs.empty() || !inputs[0].valid()) shape_fail(kind, "missing input");
  Tape *t = inputs[0].tape();
  for (const auto &in : inputs) {
    if (!in.valid() || in.tape() != t) {
      throw ContractError(std::string(primitive_name(kind)) + ": inputs live on different tapes");
    }
  }
  return *t;
}

void expect_arity(Primitive kind, std::span<const Tensor> inputs, size_t n) {
  if (inputs.size() != n) {
    shape_fail(kind, "expected " + std::to_string(n) + " inputs, got " +
                         std::to_string(inputs.size()));
  }
}

Tensor elementwise(Primitive kind, const Tensor &x, const std::function<double(double)> &f,
                   std::function<double(double)> dfdx) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(kind, ins);
  const Matrix &xv = x.value();
  Matrix out(xv.rows, xv.cols);
  for (size_t i = 0; i < xv.size(); ++i) out.data[i] = f(xv.data[i]);
  return tape.record(kind, std::move(out), ins, [x, dfdx = std::move(dfdx)](Tape &t, const Matrix &g) {
    const Matrix &xv = x.value();
    Matrix &gx = t.grad_slot(x);
    for (size_t i = 0; i < xv.size(); ++i) gx.data[i] += g.data[i] * dfdx(xv.data[i]);
  });
}

void softmax_row(std::span<const double> in, std::span<double> out) {
  double mx = -INFINITY;
  for (double v : in) mx = std::max(mx, v);
  double sum = 0.0;
  for (size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  for (double &v : out) v /= sum;
}

bool is_integer(double v) { return std::floor(v) == v; }

}  // namespace

std::string_view primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::kMatmul: return "matmul";
    case Primitive::kAdd: return "add";
    case Primitive::kSub: return "sub";
    case Primitive::kScale: return "scale";
    case Primitive::kHadamard: return "hadamard";
    case Primitive::kConcatCols: return "concat_cols";
    case Primitive::kRelu: return "relu";
    case Primitive::kLeakyRelu: return "leaky_relu";
    case Primitive::kExp: return "exp";
    case Primitive::kLog: return "log";
    case Primitive::kRowSoftmax: return "row_softmax";
    case Primitive::kMaskedRowSoftmax: return "masked_row_softmax";
    case Primitive::kL2NormalizeRows: return "l2_normalize_rows";
    case Primitive::kStandardizeColumns: return "standardize_columns";
    case Primitive::kFrobeniusSq: return "frobenius_sq";
    case Primitive::kRowDot: return "row_dot";
    case Primitive::kMeanScalar: return "mean_scalar";
    case Primitive::kPower: return "power";
    case Primitive::kGatherRows: return "gather_rows";
    case Primitive::kScatterAddRows: return "scatter_add_rows";
    case Primitive::kTranspose: return "transpose";
    case Primitive::kReshape: return "reshape";
    case Primitive::kRowLogSoftmax: return "row_log_softmax";
    case Primitive::kSegmentSoftmax: return "segment_softmax";
    case Primitive::kSumScalar: return "sum_scalar";
  }
  return "unknown";
}

std::span<const Primitive> all_primitives() { return kAllPrimitives; }

// ---------------------------------------------------------------------------
// Tensor / GradientMap / Tape

const Matrix &Tensor::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound tensor");
  return tape_->value(id_);
}

bool Tensor::requires_grad() const { return tape_ != nullptr && tape_->requires_grad(id_); }

double Tensor::item() const {
  const Matrix &v = value();
  if (v.rows != 1 || v.cols != 1) throw ContractError("item() on non-scalar " + v.shape_string());
  return v.data[0];
}

const Matrix &GradientMap::at(const Tensor &t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) throw ContractError("no gradient recorded for tensor");
  return it->second;
}

Tensor Tape::constant(Matrix value) {
  if (!value.all_finite()) throw NumericError("constant contains non-finite values");
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::variable(Matrix value) {
  if (!value.all_finite()) throw NumericError("variable contains non-finite values");
  nodes_.push_back(Node{std::move(value), {}, true, true, {}});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Primitive kind, Matrix value, std::span<const Tensor> inputs,
                    BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string(primitive_name(kind)) + " produced non-finite values");
  }
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor &t) { return t.requires_grad(); });
  Node n{std::move(value), {}, any, false, {}};
  if (any) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Matrix &Tape::grad_slot(const Tensor &t) {
  Node &n = nodes_[t.id()];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

void Tape::accumulate(const Tensor &t, const Matrix &grad) {
  Node &n = nodes_[t.id()];
  if (!n.requires_grad) return;
  Matrix &slot = grad_slot(t);
  for (size_t i = 0; i < slot.size(); ++i) slot.data[i] += grad.data[i];
}

GradientMap Tape::backward(const Tensor &loss) {
  if (loss.tape() != this) throw ContractError("backward: loss does not belong to this tape");
  const Matrix &lv = loss.value();
  if (lv.rows != 1 || lv.cols != 1) {
    throw ContractError("backward: loss must be 1x1, got " + lv.shape_string());
  }
  GradientMap out;
  if (nodes_[loss.id()].requires_grad) {
    nodes_[loss.id()].grad = Matrix(1, 1, 1.0);
    for (size_t i = loss.id() + 1; i-- > 0;) {
      Node &n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.is_variable) {
        out.grads_.emplace(i, std::move(n.grad));
        continue;
      }
      if (n.backward) {
        // Moving the closure out keeps it alive while it writes into other nodes.
        BackwardFn fn = std::move(n.backward);
        Matrix g = std::move(n.grad);
        fn(*this, g);
      }
    }
  }
  clear();
  return out;
}

// ---------------------------------------------------------------------------
// Primitives

namespace op {

Tensor matmul(const Tensor &a, const Tensor &b) {
  std::array<Tensor, 2> ins{a, b};
  Tape &tape = tape_of(Primitive::kMatmul, ins);
  const Matrix &A = a.value();
  const Matrix &B = b.value();
  if (A.cols != B.rows) shape_fail(Primitive::kMatmul, "inner dimensions differ: " + shapes(a, b));
  Matrix C(A.rows, B.cols);
  for (size_t i = 0; i < A.rows; ++i) {
    double *crow = C.data.data() + i * C.cols;
    for (size_t k = 0; k < A.cols; ++k) {
      const double aik = A(i, k);
      if (aik == 0.0) continue;
      const double *brow = B.data.data() + k * B.cols;
      for (size_t j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return tape.record(Primitive::kMatmul, std::move(C), ins, [a, b](Tape &t, const Matrix &g) {
    const Matrix &A = a.value();
    const Matrix &B = b.value();
    if (a.requires_grad()) {
      // ga += g B^T, accumulated row-wise over a transposed copy of B.
      Matrix bt(B.cols, B.rows);
      for (size_t k = 0; k < B.rows; ++k) {
        for (size_t j = 0; j < B.cols; ++j) bt(j, k) = B(k, j);
      }
      Matrix &ga = t.grad_slot(a);
      for (size_t i = 0; i < A.rows; ++i) {
        const double *grow = g.data.data() + i * g.cols;
        double *garow = ga.data.data() + i * ga.cols;
        for (size_t j = 0; j < B.cols; ++j) {
          const double gij = grow[j];
          if (gij == 0.0) continue;
          const double *btrow = bt.data.data() + j * bt.cols;
          for (size_t k = 0; k < A.cols; ++k) garow[k] += gij * btrow[k];
        }
      }
    }
    if (b.requires_grad()) {
      Matrix &gb = t.grad_slot(b);
      for (size_t i = 0; i < A.rows; ++i) {
        const double *grow = g.data.data() + i * g.cols;
        for (size_t k = 0; k < A.cols; ++k) {
          const double aik = A(i, k);
          if (aik == 0.0) continue;
          double *gbrow = gb.data.data() + k * gb.cols;
          for (size_t j = 0; j < B.cols; ++j) gbrow[j] += aik * grow[j];
        }
      }
    }
  });
}

namespace {
Tensor add_sub(Primitive kind, const Tensor &a, const Tensor &b, double sign) {
  std::array<Tensor, 2> ins{a, b};
  Tape &tape = tape_of(kind, ins);
  const Matrix &A = a.value();
  const Matrix &B = b.value();
  if (!A.same_shape(B)) shape_fail(kind, "shapes differ: " + shapes(a, b));
  Matrix C(A.rows, A.cols);
  for (size_t i = 0; i < A.size(); ++i) C.data[i] = A.data[i] + sign * B.data[i];
  return tape.record(kind, std::move(C), ins, [a, b, sign](Tape &t, const Matrix &g) {
    if (a.requires_grad()) t.accumulate(a, g);
    if (b.requires_grad()) {
      Matrix &gb = t.grad_slot(b);
      for (size_t i = 0; i < g.size(); ++i) gb.data[i] += sign * g.data[i];
    }
  });
}
}  // namespace

Tensor add(const Tensor &a, const Tensor &b) { return add_sub(Primitive::kAdd, a, b, 1.0); }
Tensor sub(const Tensor &a, const Tensor &b) { return add_sub(Primitive::kSub, a, b, -1.0); }

Tensor scale(const Tensor &x, double factor) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kScale, ins);
  Matrix y = x.value();
  for (double &v : y.data) v *= factor;
  return tape.record(Primitive::kScale, std::move(y), ins, [x, factor](Tape &t, const Matrix &g) {
    Matrix &gx = t.grad_slot(x);
    for (size_t i = 0; i < g.size(); ++i) gx.data[i] += factor * g.data[i];
  });
}

Tensor hadamard(const Tensor &a, const Tensor &b) {
  std::array<Tensor, 2> ins{a, b};
  Tape &tape = tape_of(Primitive::kHadamard, ins);
  const Matrix &A = a.value();
  const Matrix &B = b.value();
  if (A.same_shape(B)) {
    Matrix C(A.rows, A.cols);
    for (size_t i = 0; i < A.size(); ++i) C.data[i] = A.data[i] * B.data[i];
    return tape.record(Primitive::kHadamard, std::move(C), ins, [a, b](Tape &t, const Matrix &g) {
      const Matrix &A = a.value();
      const Matrix &B = b.value();
      if (a.requires_grad()) {
        Matrix &ga = t.grad_slot(a);
        for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * B.data[i];
      }
      if (b.requires_grad()) {
        Matrix &gb = t.grad_slot(b);
        for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * A.data[i];
      }
    });
  }
  // Column broadcast: one side is rows x 1.
  const bool a_is_col = A.cols == 1 && B.rows == A.rows;
  const bool b_is_col = B.cols == 1 && A.rows == B.rows;
  if (!a_is_col && !b_is_col) shape_fail(Primitive::kHadamard, "incompatible shapes " + shapes(a, b));
  const Tensor &wide = a_is_col ? b : a;
  const Tensor &col = a_is_col ? a : b;
  const Matrix &W = wide.value();
  const Matrix &c = col.value();
  Matrix out(W.rows, W.cols);
  for (size_t r = 0; r < W.rows; ++r) {
    for (size_t j = 0; j < W.cols; ++j) out(r, j) = W(r, j) * c.data[r];
  }
  return tape.record(Primitive::kHadamard, std::move(out), ins,
                     [wide, col](Tape &t, const Matrix &g) {
                       const Matrix &W = wide.value();
                       const Matrix &c = col.value();
                       if (wide.requires_grad()) {
                         Matrix &gw = t.grad_slot(wide);
                         for (size_t r = 0; r < W.rows; ++r) {
                           for (size_t j = 0; j < W.cols; ++j) gw(r, j) += g(r, j) * c.data[r];
                         }
                       }
                       if (col.requires_grad()) {
                         Matrix &gc = t.grad_slot(col);
                         for (size_t r = 0; r < W.rows; ++r) {
                           double s = 0.0;
                           for (size_t j = 0; j < W.cols; ++j) s += g(r, j) * W(r, j);
                           gc.data[r] += s;
                         }
                       }
                     });
}

Tensor concat_cols(const Tensor &a, const Tensor &b) {
  std::array<Tensor, 2> ins{a, b};
  Tape &tape = tape_of(Primitive::kConcatCols, ins);
  const Matrix &A = a.value();
  const Matrix &B = b.value();
  if (A.rows != B.rows) shape_fail(Primitive::kConcatCols, "row counts differ: " + shapes(a, b));
  Matrix C(A.rows, A.cols + B.cols);
  for (size_t r = 0; r < A.rows; ++r) {
    std::copy(A.row(r).begin(), A.row(r).end(), C.row(r).begin());
    std::copy(B.row(r).begin(), B.row(r).end(), C.row(r).begin() + A.cols);
  }
  return tape.record(Primitive::kConcatCols, std::move(C), ins, [a, b](Tape &t, const Matrix &g) {
    const size_t ac = a.cols();
    if (a.requires_grad()) {
      Matrix &ga = t.grad_slot(a);
      for (size_t r = 0; r < g.rows; ++r)
        for (size_t j = 0; j < ac; ++j) ga(r, j) += g(r, j);
    }
    if (b.requires_grad()) {
      Matrix &gb = t.grad_slot(b);
      for (size_t r = 0; r < g.rows; ++r)
        for (size_t j = 0; j < gb.cols; ++j) gb(r, j) += g(r, ac + j);
    }
  });
}

Tensor relu(const Tensor &x) {
  return elementwise(
      Primitive::kRelu, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor &x, double slope) {
  return elementwise(
      Primitive::kLeakyRelu, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

Tensor exp(const Tensor &x) {
  return elementwise(
      Primitive::kExp, x, [](double v) { return std::exp(v); },
      [](double v) { return std::exp(v); });
}

Tensor log(const Tensor &x) {
  for (double v : x.value().data) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return elementwise(
      Primitive::kLog, x, [](double v) { return std::log(v); },
      [](double v) { return 1.0 / v; });
}

Tensor power(const Tensor &x, double exponent) {
  for (double v : x.value().data) {
    if (v < 0.0 && !is_integer(exponent)) {
      throw DomainError("power: negative base " + std::to_string(v) + " with fractional exponent");
    }
    if (v == 0.0 && exponent < 1.0 && exponent != 0.0) {
      throw DomainError("power: zero base with exponent " + std::to_string(exponent));
    }
  }
  return elementwise(
      Primitive::kPower, x, [exponent](double v) { return std::pow(v, exponent); },
      [exponent](double v) {
        if (exponent == 0.0) return 0.0;
        if (exponent == 1.0) return 1.0;
        return exponent * std::pow(v, exponent - 1.0);
      });
}

namespace {
// dy = softmax jacobian-vector product, row by row.
void softmax_backward_rows(const Matrix &y, const Matrix &g, Matrix &gx) {
  for (size_t r = 0; r < y.rows; ++r) {
    double dot = 0.0;
    for (size_t j = 0; j < y.cols; ++j) dot += y(r, j) * g(r, j);
    for (size_t j = 0; j < y.cols; ++j) gx(r, j) += y(r, j) * (g(r, j) - dot);
  }
}
}  // namespace

Tensor row_softmax(const Tensor &x) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kRowSoftmax, ins);
  const Matrix &X = x.value();
  if (X.cols == 0) shape_fail(Primitive::kRowSoftmax, "zero columns");
  Matrix y(X.rows, X.cols);
  for (size_t r = 0; r < X.rows; ++r) softmax_row(X.row(r), y.row(r));
  Matrix saved = y;
  return tape.record(Primitive::kRowSoftmax, std::move(y), ins,
                     [x, saved = std::move(saved)](Tape &t, const Matrix &g) {
                       softmax_backward_rows(saved, g, t.grad_slot(x));
                     });
}

Tensor masked_row_softmax(const Tensor &x, std::vector<unsigned char> keep) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kMaskedRowSoftmax, ins);
  const Matrix &X = x.value();
  if (keep.size() != X.size()) {
    shape_fail(Primitive::kMaskedRowSoftmax,
               "mask has " + std::to_string(keep.size()) + " entries for " + X.shape_string());
  }
  Matrix y(X.rows, X.cols);
  for (size_t r = 0; r < X.rows; ++r) {
    double mx = -INFINITY;
    for (size_t j = 0; j < X.cols; ++j)
      if (keep[r * X.cols + j]) mx = std::max(mx, X(r, j));
    if (mx == -INFINITY) throw DomainError("masked_row_softmax: row " + std::to_string(r) + " fully masked");
    double sum = 0.0;
    for (size_t j = 0; j < X.cols; ++j) {
      if (!keep[r * X.cols + j]) continue;
      y(r, j) = std::exp(X(r, j) - mx);
      sum += y(r, j);
    }
    for (size_t j = 0; j < X.cols; ++j) y(r, j) /= sum;
  }
  Matrix saved = y;
  return tape.record(Primitive::kMaskedRowSoftmax, std::move(y), ins,
                     [x, saved = std::move(saved)](Tape &t, const Matrix &g) {
                       // Masked entries have y = 0, so they receive no gradient.
                       softmax_backward_rows(saved, g, t.grad_slot(x));
                     });
}

Tensor row_log_softmax(const Tensor &x) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kRowLogSoftmax, ins);
  const Matrix &X = x.value();
  if (X.cols == 0) shape_fail(Primitive::kRowLogSoftmax, "zero columns");
  Matrix y(X.rows, X.cols);
  Matrix probs(X.rows, X.cols);
  for (size_t r = 0; r < X.rows; ++r) {
    double mx = -INFINITY;
    for (double v : X.row(r)) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : X.row(r)) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (size_t j = 0; j < X.cols; ++j) {
      y(r, j) = X(r, j) - lse;
      probs(r, j) = std::exp(y(r, j));
    }
  }
  return tape.record(Primitive::kRowLogSoftmax, std::move(y), ins,
                     [x, probs = std::move(probs)](Tape &t, const Matrix &g) {
                       Matrix &gx = t.grad_slot(x);
                       for (size_t r = 0; r < g.rows; ++r) {
                         double gs = 0.0;
                         for (size_t j = 0; j < g.cols; ++j) gs += g(r, j);
                         for (size_t j = 0; j < g.cols; ++j) gx(r, j) += g(r, j) - probs(r, j) * gs;
                       }
                     });
}

Tensor segment_softmax(const Tensor &x, std::vector<size_t> segment, size_t num_segments) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kSegmentSoftmax, ins);
  const Matrix &X = x.value();
  if (X.cols != 1) shape_fail(Primitive::kSegmentSoftmax, "expects a column, got " + X.shape_string());
  if (segment.size() != X.rows) {
    shape_fail(Primitive::kSegmentSoftmax, "segment ids " + std::to_string(segment.size()) +
                                               " for " + std::to_string(X.rows) + " rows");
  }
  std::vector<double> mx(num_segments, -INFINITY);
  for (size_t i = 0; i < X.rows; ++i) {
    if (segment[i] >= num_segments) shape_fail(Primitive::kSegmentSoftmax, "segment id out of range");
    mx[segment[i]] = std::max(mx[segment[i]], X.data[i]);
  }
  std::vector<double> sum(num_segments, 0.0);
  Matrix y(X.rows, 1);
  for (size_t i = 0; i < X.rows; ++i) {
    y.data[i] = std::exp(X.data[i] - mx[segment[i]]);
    sum[segment[i]] += y.data[i];
  }
  for (size_t i = 0; i < X.rows; ++i) y.data[i] /= sum[segment[i]];
  Matrix saved = y;
  return tape.record(
      Primitive::kSegmentSoftmax, std::move(y), ins,
      [x, saved = std::move(saved), segment = std::move(segment), num_segments](Tape &t,
                                                                                const Matrix &g) {
        std::vector<double> dot(num_segments, 0.0);
        for (size_t i = 0; i < g.rows; ++i) dot[segment[i]] += saved.data[i] * g.data[i];
        Matrix &gx = t.grad_slot(x);
        for (size_t i = 0; i < g.rows; ++i) {
          gx.data[i] += saved.data[i] * (g.data[i] - dot[segment[i]]);
        }
      });
}

Tensor l2_normalize_rows(const Tensor &x) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kL2NormalizeRows, ins);
  const Matrix &X = x.value();
  Matrix y(X.rows, X.cols);
  std::vector<double> norms(X.rows);
  for (size_t r = 0; r < X.rows; ++r) {
    double s = 0.0;
    for (double v : X.row(r)) s += v * v;
    norms[r] = std::sqrt(s);
    if (norms[r] < kNormalizeFloor) continue;
    for (size_t j = 0; j < X.cols; ++j) y(r, j) = X(r, j) / norms[r];
  }
  Matrix saved = y;
  return tape.record(Primitive::kL2NormalizeRows, std::move(y), ins,
                     [x, saved = std::move(saved), norms = std::move(norms)](Tape &t,
                                                                             const Matrix &g) {
                       Matrix &gx = t.grad_slot(x);
                       for (size_t r = 0; r < g.rows; ++r) {
                         if (norms[r] < kNormalizeFloor) continue;
                         double dot = 0.0;
                         for (size_t j = 0; j < g.cols; ++j) dot += saved(r, j) * g(r, j);
                         for (size_t j = 0; j < g.cols; ++j) {
                           gx(r, j) += (g(r, j) - saved(r, j) * dot) / norms[r];
                         }
                       }
                     });
}

Tensor standardize_columns(const Tensor &x) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kStandardizeColumns, ins);
  const Matrix &X = x.value();
  const size_t n = X.rows;
  if (n == 0) shape_fail(Primitive::kStandardizeColumns, "zero rows");
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  std::vector<double> denom(X.cols);  // max(std, eps)
  std::vector<unsigned char> guarded(X.cols, 0);
  Matrix centered(n, X.cols);
  for (size_t j = 0; j < X.cols; ++j) {
    double mean = 0.0;
    for (size_t r = 0; r < n; ++r) mean += X(r, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t r = 0; r < n; ++r) {
      centered(r, j) = X(r, j) - mean;
      var += centered(r, j) * centered(r, j);
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    guarded[j] = sd < kStandardizeEpsilon;
    denom[j] = guarded[j] ? kStandardizeEpsilon : sd;
  }
  Matrix y(n, X.cols);
  for (size_t r = 0; r < n; ++r)
    for (size_t j = 0; j < X.cols; ++j) y(r, j) = centered(r, j) / (denom[j] * sqrt_n);
  Matrix saved = y;
  return tape.record(
      Primitive::kStandardizeColumns, std::move(y), ins,
      [x, saved = std::move(saved), denom = std::move(denom), guarded = std::move(guarded),
       sqrt_n](Tape &t, const Matrix &g) {
        Matrix &gx = t.grad_slot(x);
        const size_t n = g.rows;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (size_t j = 0; j < g.cols; ++j) {
          double mean_g = 0.0;
          for (size_t r = 0; r < n; ++r) mean_g += g(r, j);
          mean_g *= inv_n;
          if (guarded[j]) {
            for (size_t r = 0; r < n; ++r) gx(r, j) += (g(r, j) - mean_g) / (denom[j] * sqrt_n);
            continue;
          }
          // y = xhat / sqrt(n) with xhat = (x - mean) / sd.
          double mean_gy = 0.0;
          for (size_t r = 0; r < n; ++r) mean_gy += g(r, j) * saved(r, j);
          mean_gy *= inv_n;
          for (size_t r = 0; r < n; ++r) {
            gx(r, j) += (g(r, j) - mean_g - saved(r, j) * sqrt_n * sqrt_n * mean_gy) /
                        (denom[j] * sqrt_n);
          }
        }
      });
}

Tensor frobenius_sq(const Tensor &x) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kFrobeniusSq, ins);
  double s = 0.0;
  for (double v : x.value().data) s += v * v;
  return tape.record(Primitive::kFrobeniusSq, Matrix(1, 1, s), ins, [x](Tape &t, const Matrix &g) {
    const Matrix &X = x.value();
    Matrix &gx = t.grad_slot(x);
    const double g0 = 2.0 * g.data[0];
    for (size_t i = 0; i < X.size(); ++i) gx.data[i] += g0 * X.data[i];
  });
}

Tensor row_dot(const Tensor &a, const Tensor &b) {
  std::array<Tensor, 2> ins{a, b};
  Tape &tape = tape_of(Primitive::kRowDot, ins);
  const Matrix &A = a.value();
  const Matrix &B = b.value();
  if (!A.same_shape(B)) shape_fail(Primitive::kRowDot, "shapes differ: " + shapes(a, b));
  Matrix y(A.rows, 1);
  for (size_t r = 0; r < A.rows; ++r) {
    double s = 0.0;
    for (size_t j = 0; j < A.cols; ++j) s += A(r, j) * B(r, j);
    y.data[r] = s;
  }
  return tape.record(Primitive::kRowDot, std::move(y), ins, [a, b](Tape &t, const Matrix &g) {
    const Matrix &A = a.value();
    const Matrix &B = b.value();
    if (a.requires_grad()) {
      Matrix &ga = t.grad_slot(a);
      for (size_t r = 0; r < A.rows; ++r)
        for (size_t j = 0; j < A.cols; ++j) ga(r, j) += g.data[r] * B(r, j);
    }
    if (b.requires_grad()) {
      Matrix &gb = t.grad_slot(b);
      for (size_t r = 0; r < A.rows; ++r)
        for (size_t j = 0; j < A.cols; ++j) gb(r, j) += g.data[r] * A(r, j);
    }
  });
}

namespace {
Tensor reduce_scalar(Primitive kind, const Tensor &x, bool mean) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(kind, ins);
  const Matrix &X = x.value();
  if (X.size() == 0) shape_fail(kind, "empty input");
  double s = 0.0;
  for (double v : X.data) s += v;
  const double factor = mean ? 1.0 / static_cast<double>(X.size()) : 1.0;
  return tape.record(kind, Matrix(1, 1, s * factor), ins, [x, factor](Tape &t, const Matrix &g) {
    Matrix &gx = t.grad_slot(x);
    const double v = g.data[0] * factor;
    for (double &e : gx.data) e += v;
  });
}
}  // namespace

Tensor mean_scalar(const Tensor &x) { return reduce_scalar(Primitive::kMeanScalar, x, true); }
Tensor sum_scalar(const Tensor &x) { return reduce_scalar(Primitive::kSumScalar, x, false); }

Tensor gather_rows(const Tensor &x, std::vector<size_t> index) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kGatherRows, ins);
  const Matrix &X = x.value();
  Matrix y(index.size(), X.cols);
  for (size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= X.rows) {
      shape_fail(Primitive::kGatherRows, "row " + std::to_string(index[i]) + " out of range for " +
                                             X.shape_string());
    }
    std::copy(X.row(index[i]).begin(), X.row(index[i]).end(), y.row(i).begin());
  }
  return tape.record(Primitive::kGatherRows, std::move(y), ins,
                     [x, index = std::move(index)](Tape &t, const Matrix &g) {
                       Matrix &gx = t.grad_slot(x);
                       for (size_t i = 0; i < index.size(); ++i) {
                         double *dst = gx.data.data() + index[i] * gx.cols;
                         const double *src = g.data.data() + i * g.cols;
                         for (size_t j = 0; j < g.cols; ++j) dst[j] += src[j];
                       }
                     });
}

Tensor scatter_add_rows(const Tensor &x, std::vector<size_t> index, size_t out_rows) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kScatterAddRows, ins);
  const Matrix &X = x.value();
  if (index.size() != X.rows) {
    shape_fail(Primitive::kScatterAddRows, std::to_string(index.size()) + " ids for " +
                                               X.shape_string());
  }
  Matrix y(out_rows, X.cols);
  for (size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= out_rows) {
      shape_fail(Primitive::kScatterAddRows, "target row " + std::to_string(index[i]) +
                                                 " out of range " + std::to_string(out_rows));
    }
    double *dst = y.data.data() + index[i] * y.cols;
    const double *src = X.data.data() + i * X.cols;
    for (size_t j = 0; j < X.cols; ++j) dst[j] += src[j];
  }
  return tape.record(Primitive::kScatterAddRows, std::move(y), ins,
                     [x, index = std::move(index)](Tape &t, const Matrix &g) {
                       Matrix &gx = t.grad_slot(x);
                       for (size_t i = 0; i < index.size(); ++i) {
                         const double *src = g.data.data() + index[i] * g.cols;
                         double *dst = gx.data.data() + i * gx.cols;
                         for (size_t j = 0; j < g.cols; ++j) dst[j] += src[j];
                       }
                     });
}

Tensor transpose(const Tensor &x) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kTranspose, ins);
  const Matrix &X = x.value();
  Matrix y(X.cols, X.rows);
  for (size_t r = 0; r < X.rows; ++r)
    for (size_t j = 0; j < X.cols; ++j) y(j, r) = X(r, j);
  return tape.record(Primitive::kTranspose, std::move(y), ins, [x](Tape &t, const Matrix &g) {
    Matrix &gx = t.grad_slot(x);
    for (size_t r = 0; r < gx.rows; ++r)
      for (size_t j = 0; j < gx.cols; ++j) gx(r, j) += g(j, r);
  });
}

Tensor reshape(const Tensor &x, size_t rows, size_t cols) {
  std::array<Tensor, 1> ins{x};
  Tape &tape = tape_of(Primitive::kReshape, ins);
  const Matrix &X = x.value();
  if (rows * cols != X.size()) {
    shape_fail(Primitive::kReshape, "cannot view " + X.shape_string() + " as " +
                                        std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix y(rows, cols, X.data);
  return tape.record(Primitive::kReshape, std::move(y), ins, [x](Tape &t, const Matrix &g) {
    Matrix &gx = t.grad_slot(x);
    for (size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
  });
}

}  // namespace op

Tensor primitive_forward(Primitive kind, std::span<const Tensor> inputs,
                         const PrimitiveAttrs &attrs) {
  switch (kind) {
    case Primitive::kMatmul: expect_arity(kind, inputs, 2); return op::matmul(inputs[0], inputs[1]);
    case Primitive::kAdd: expect_arity(kind, inputs, 2); return op::add(inputs[0], inputs[1]);
    case Primitive::kSub: expect_arity(kind, inputs, 2); return op::sub(inputs[0], inputs[1]);
    case Primitive::kScale: expect_arity(kind, inputs, 1); return op::scale(inputs[0], attrs.scalar);
    case Primitive::kHadamard: expect_arity(kind, inputs, 2); return op::hadamard(inputs[0], inputs[1]);
    case Primitive::kConcatCols: expect_arity(kind, inputs, 2); return op::concat_cols(inputs[0], inputs[1]);
    case Primitive::kRelu: expect_arity(kind, inputs, 1); return op::relu(inputs[0]);
    case Primitive::kLeakyRelu: expect_arity(kind, inputs, 1); return op::leaky_relu(inputs[0], attrs.scalar);
    case Primitive::kExp: expect_arity(kind, inputs, 1); return op::exp(inputs[0]);
    case Primitive::kLog: expect_arity(kind, inputs, 1); return op::log(inputs[0]);
    case Primitive::kRowSoftmax: expect_arity(kind, inputs, 1); return op::row_softmax(inputs[0]);
    case Primitive::kMaskedRowSoftmax:
      expect_arity(kind, inputs, 1);
      return op::masked_row_softmax(inputs[0], attrs.mask);
    case Primitive::kL2NormalizeRows: expect_arity(kind, inputs, 1); return op::l2_normalize_rows(inputs[0]);
    case Primitive::kStandardizeColumns:
      expect_arity(kind, inputs, 1);
      return op::standardize_columns(inputs[0]);
    case Primitive::kFrobeniusSq: expect_arity(kind, inputs, 1); return op::frobenius_sq(inputs[0]);
    case Primitive::kRowDot: expect_arity(kind, inputs, 2); return op::row_dot(inputs[0], inputs[1]);
    case Primitive::kMeanScalar: expect_arity(kind, inputs, 1); return op::mean_scalar(inputs[0]);
    case Primitive::kPower: expect_arity(kind, inputs, 1); return op::power(inputs[0], attrs.scalar);
    case Primitive::kGatherRows: expect_arity(kind, inputs, 1); return op::gather_rows(inputs[0], attrs.index);
    case Primitive::kScatterAddRows:
      expect_arity(kind, inputs, 1);
      return op::scatter_add_rows(inputs[0], attrs.index, attrs.count);
    case Primitive::kTranspose: expect_arity(kind, inputs, 1); return op::transpose(inputs[0]);
    case Primitive::kReshape: expect_arity(kind, inputs, 1); return op::reshape(inputs[0], attrs.rows, attrs.cols);
    case Primitive::kRowLogSoftmax: expect_arity(kind, inputs, 1); return op::row_log_softmax(inputs[0]);
    case Primitive::kSegmentSoftmax:
      expect_arity(kind, inputs, 1);
      return op::segment_softmax(inputs[0], attrs.index, attrs.count);
    case Primitive::kSumScalar: expect_arity(kind, inputs, 1); return op::sum_scalar(inputs[0]);
  }
  throw ContractError("unknown primitive");
}

Matrix finite_difference_gradient(const std::function<double(const Matrix &)> &f, const Matrix &x,
                                  double eps) {
  if (!(eps > 0.0)) throw ValidationError("finite_difference_gradient: eps must be positive");
  Matrix grad(x.rows, x.cols);
  Matrix probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + eps;
    const double fp = f(probe);
    probe.data[i] = orig - eps;
    const double fm = f(probe);
    probe.data[i] = orig;
    grad.data[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

double gradient_relative_error(const Matrix &g, const Matrix &g_ref) {
  if (!g.same_shape(g_ref)) {
    throw ShapeError("gradient shapes differ: " + g.shape_string() + " vs " + g_ref.shape_string());
  }
  double worst = 0.0;
  for (size_t i = 0; i < g.size(); ++i) {
    worst = std::max(worst, std::abs(g.data[i] - g_ref.data[i]) / std::max(1.0, std::abs(g_ref.data[i])));
  }
  return worst;
}

}  // namespace ssmtl
