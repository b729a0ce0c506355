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
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ssmtl {

/// Dense row-major matrix of doubles. Plain value type; the autodiff tape
/// stores these and model parameters are held as these.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(size_t r, size_t c, std::vector<double> values);

  /// Builds from nested rows, e.g. `Matrix::from_rows({{1, 2}, {3, 4}})`.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(size_t n);
  static Matrix column(std::span<const double> values);

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  double &operator()(size_t r, size_t c) { return data[r * cols + c]; }
  double operator()(size_t r, size_t c) const { return data[r * cols + c]; }

  std::span<double> row(size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Matrix &o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_string() const;

  bool all_finite() const;

  friend bool operator==(const Matrix &a, const Matrix &b) = default;
};

/// Largest absolute elementwise difference. Shapes must match.
double max_abs_diff(const Matrix &a, const Matrix &b);

}  // namespace ssmtl
