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

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ssmtl/matrix.hpp"

namespace ssmtl {

/// Every differentiable primitive the tape knows about. The first block is
/// the core set used by the encoder and losses; the trailing entries are
/// layout helpers (transpose/reshape) and fused, numerically stable forms
/// (log-softmax, per-segment softmax, sum).
enum class Primitive {
  kMatmul,
  kAdd,
  kSub,
  kScale,
  kHadamard,
  kConcatCols,
  kRelu,
  kLeakyRelu,
  kExp,
  kLog,
  kRowSoftmax,
  kMaskedRowSoftmax,
  kL2NormalizeRows,
  kStandardizeColumns,
  kFrobeniusSq,
  kRowDot,
  kMeanScalar,
  kPower,
  kGatherRows,
  kScatterAddRows,
  kTranspose,
  kReshape,
  kRowLogSoftmax,
  kSegmentSoftmax,
  kSumScalar,
};

std::string_view primitive_name(Primitive kind);
std::span<const Primitive> all_primitives();

/// Non-tensor arguments. Which fields are read depends on the primitive:
///   scalar  - scale factor (kScale), exponent (kPower), slope (kLeakyRelu)
///   index   - row ids (kGatherRows, kScatterAddRows), segment ids (kSegmentSoftmax)
///   count   - output rows (kScatterAddRows), number of segments (kSegmentSoftmax)
///   mask    - kMaskedRowSoftmax keep-mask, one byte per element, 1 = keep
///   rows/cols - kReshape target shape
struct PrimitiveAttrs {
  double scalar = 0.0;
  std::vector<size_t> index;
  size_t count = 0;
  std::vector<unsigned char> mask;
  size_t rows = 0;
  size_t cols = 0;
};

/// Column-standardization guard. Columns whose population std is below this
/// are divided by the guard instead.
inline constexpr double kStandardizeEpsilon = 1e-8;
/// Rows with a smaller norm are mapped to zero by l2_normalize_rows.
inline constexpr double kNormalizeFloor = 1e-12;

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid until the
/// owning tape is cleared.
class Tensor {
 public:
  Tensor() = default;

  const Matrix &value() const;
  size_t rows() const { return value().rows; }
  size_t cols() const { return value().cols; }
  bool requires_grad() const;
  /// Value of a 1x1 tensor.
  double item() const;

  bool valid() const { return tape_ != nullptr; }
  size_t id() const { return id_; }
  Tape *tape() const { return tape_; }

 private:
  friend class Tape;
  Tensor(Tape *tape, size_t id) : tape_(tape), id_(id) {}

  Tape *tape_ = nullptr;
  size_t id_ = 0;
};

/// Gradients of the differentiated scalar with respect to each variable
/// that the scalar depends on. Variables the loss never touched are absent.
class GradientMap {
 public:
  bool contains(const Tensor &t) const { return grads_.count(t.id()) != 0; }
  const Matrix &at(const Tensor &t) const;
  size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<size_t, Matrix> grads_;
};

/// Define-by-run reverse-mode tape. Not thread-safe; use one tape per thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape &, const Matrix &grad_out)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Tensor constant(Matrix value);
  Tensor variable(Matrix value);

  /// Appends a primitive result. `backward` is dropped when no input
  /// requires a gradient. Throws NumericError on non-finite values.
  Tensor record(Primitive kind, Matrix value, std::span<const Tensor> inputs, BackwardFn backward);

  /// Reverse sweep from a 1x1 loss. Clears the tape afterwards.
  GradientMap backward(const Tensor &loss);

  /// Adds `grad` into the gradient slot of `t` if it requires a gradient.
  void accumulate(const Tensor &t, const Matrix &grad);
  /// Zero-initialized gradient slot of `t`, for in-place accumulation.
  Matrix &grad_slot(const Tensor &t);

  const Matrix &value(size_t id) const { return nodes_[id].value; }
  bool requires_grad(size_t id) const { return nodes_[id].requires_grad; }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_variable = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

/// Generic entry point: applies `kind` to `inputs` and records it.
Tensor primitive_forward(Primitive kind, std::span<const Tensor> inputs,
                         const PrimitiveAttrs &attrs = {});

namespace op {

Tensor matmul(const Tensor &a, const Tensor &b);
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &x, double factor);
/// Elementwise product; either operand may be a single column broadcast
/// across the other's columns.
Tensor hadamard(const Tensor &a, const Tensor &b);
Tensor concat_cols(const Tensor &a, const Tensor &b);
Tensor relu(const Tensor &x);
Tensor leaky_relu(const Tensor &x, double slope);
Tensor exp(const Tensor &x);
Tensor log(const Tensor &x);
Tensor row_softmax(const Tensor &x);
Tensor masked_row_softmax(const Tensor &x, std::vector<unsigned char> keep);
Tensor l2_normalize_rows(const Tensor &x);
/// Per column: subtract the mean and divide by max(std, eps) * sqrt(rows),
/// so every non-constant column has mean 0 and unit 2-norm.
Tensor standardize_columns(const Tensor &x);
Tensor frobenius_sq(const Tensor &x);
Tensor row_dot(const Tensor &a, const Tensor &b);
Tensor mean_scalar(const Tensor &x);
Tensor sum_scalar(const Tensor &x);
Tensor power(const Tensor &x, double exponent);
Tensor gather_rows(const Tensor &x, std::vector<size_t> index);
Tensor scatter_add_rows(const Tensor &x, std::vector<size_t> index, size_t out_rows);
Tensor transpose(const Tensor &x);
Tensor reshape(const Tensor &x, size_t rows, size_t cols);
Tensor row_log_softmax(const Tensor &x);
/// Softmax of a column vector within groups given by `segment` (one id per
/// row, ids < num_segments).
Tensor segment_softmax(const Tensor &x, std::vector<size_t> segment, size_t num_segments);

}  // namespace op

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
Matrix finite_difference_gradient(const std::function<double(const Matrix &)> &f,
                                  const Matrix &x, double eps = 1e-5);

/// max |g - g_ref| / max(1, max |g_ref|).
double gradient_relative_error(const Matrix &g, const Matrix &g_ref);

}  // namespace ssmtl
