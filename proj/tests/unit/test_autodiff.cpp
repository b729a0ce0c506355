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

#include <cmath>
#include <limits>

#include "doctest.h"
#include "ssmtl/autodiff.hpp"
#include "ssmtl/errors.hpp"
#include "ssmtl/gradcheck.hpp"
#include "test_util.hpp"

using namespace ssmtl;
using namespace ssmtl::testing;

TEST_CASE("row_softmax of equal logits is uniform") {
  Tape t;
  const auto y = op::row_softmax(t.constant(Matrix::from_rows({{0, 0}})));
  CHECK(y.value()(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y.value()(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("row_softmax rows sum to one, masked entries are exactly zero") {
  Rng rng(1);
  Tape t;
  const Matrix x = random_matrix(rng, 6, 9, -30, 30);
  const auto y = op::row_softmax(t.constant(x));
  std::vector<unsigned char> keep(54, 1);
  for (size_t i = 0; i < 54; i += 4) keep[i] = 0;
  const auto z = op::masked_row_softmax(t.constant(x), keep);
  for (size_t r = 0; r < 6; ++r) {
    double s = 0.0, sm = 0.0;
    for (size_t c = 0; c < 9; ++c) {
      s += y.value()(r, c);
      sm += z.value()(r, c);
      if (!keep[r * 9 + c]) CHECK(z.value()(r, c) == 0.0);
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
    CHECK(std::abs(sm - 1.0) < 1e-12);
  }
  std::vector<unsigned char> none(54, 1);
  for (size_t c = 0; c < 9; ++c) none[c] = 0;
  CHECK_THROWS_AS(op::masked_row_softmax(t.constant(x), none), DomainError);
}

TEST_CASE("row_softmax survives huge logits") {
  Tape t;
  const auto y = op::row_softmax(t.constant(Matrix::from_rows({{1000, 0, -1000}})));
  CHECK(y.value()(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("standardize_columns: two rows") {
  Tape t;
  const auto y = op::standardize_columns(t.constant(Matrix::from_rows({{1}, {3}})));
  // Mean 0 and population std 1/sqrt(n): with n = 2 that is +-1/sqrt(2).
  CHECK(std::abs(y.value()(0, 0) + 1.0 / std::sqrt(2.0)) < 1e-15);
  CHECK(std::abs(y.value()(1, 0) - 1.0 / std::sqrt(2.0)) < 1e-15);
}

TEST_CASE("standardize_columns: zero mean and unit column norm") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tape t;
    const Matrix x = random_matrix(rng, 3 + rng.below(30), 1 + rng.below(6), -50, 50);
    const Matrix &y = op::standardize_columns(t.constant(x)).value();
    for (size_t c = 0; c < y.cols; ++c) {
      double mean = 0.0, sq = 0.0;
      for (size_t r = 0; r < y.rows; ++r) {
        mean += y(r, c);
        sq += y(r, c) * y(r, c);
      }
      CHECK(std::abs(mean / static_cast<double>(y.rows)) < 1e-10);
      CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-10);
    }
  }
  Tape t;
  const Matrix &flat = op::standardize_columns(t.constant(Matrix(4, 2, 7.0))).value();
  for (double v : flat.data) CHECK(v == 0.0);
}

TEST_CASE("shape and domain errors") {
  Tape t;
  CHECK(op::matmul(t.constant(Matrix(2, 3)), t.constant(Matrix(3, 1))).rows() == 2);
  try {
    op::matmul(t.constant(Matrix(2, 3)), t.constant(Matrix(2, 3)));
    FAIL("expected a shape error");
  } catch (const ShapeError &e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(op::add(t.constant(Matrix(2, 3)), t.constant(Matrix(3, 2))), ShapeError);
  CHECK_THROWS_AS(op::log(t.constant(Matrix(1, 1, -1.0))), DomainError);
  CHECK_THROWS_AS(op::power(t.constant(Matrix(1, 1, -1.0)), 0.5), DomainError);
  CHECK_THROWS_AS(op::exp(t.constant(Matrix(1, 1, 1e6))), NumericError);
  CHECK_THROWS_AS(t.constant(Matrix(1, 1, std::numeric_limits<double>::infinity())), NumericError);
}

TEST_CASE("primitive_forward dispatches every primitive") {
  for (Primitive kind : all_primitives()) CHECK_FALSE(primitive_name(kind).empty());
  CHECK(all_primitives().size() == 25);
  Tape t;
  const Tensor a = t.constant(Matrix::from_rows({{1, 2}, {3, 4}}));
  const Tensor ins[] = {a, a};
  CHECK(primitive_forward(Primitive::kAdd, ins).value() == Matrix::from_rows({{2, 4}, {6, 8}}));
  CHECK_THROWS_AS(primitive_forward(Primitive::kRelu, ins), Error);
}

TEST_CASE("backward: simple gradients") {
  SUBCASE("mean") {
    Tape t;
    const Tensor x = t.variable(Matrix::from_rows({{1, 2, 3, 4}}));
    const auto g = t.backward(op::mean_scalar(x));
    CHECK(g.at(x) == Matrix::from_rows({{0.25, 0.25, 0.25, 0.25}}));
  }
  SUBCASE("frobenius") {
    Tape t;
    const Matrix xv = Matrix::from_rows({{1, -2}, {0.5, 3}});
    const Tensor x = t.variable(xv);
    const auto g = t.backward(op::frobenius_sq(x));
    for (size_t i = 0; i < 4; ++i) CHECK(g.at(x).data[i] == 2.0 * xv.data[i]);
  }
  SUBCASE("fan-out accumulates") {
    Tape t;
    const Tensor x = t.variable(Matrix(1, 1, 3.0));
    const auto g = t.backward(op::add(x, x));
    CHECK(g.at(x)(0, 0) == 2.0);
  }
  SUBCASE("untouched variables are absent and the tape is cleared") {
    Tape t;
    const Tensor x = t.variable(Matrix(1, 1, 3.0));
    const Tensor unused = t.variable(Matrix(1, 1, 1.0));
    const auto g = t.backward(op::scale(x, 2.0));
    CHECK(g.contains(x));
    CHECK_FALSE(g.contains(unused));
    CHECK(g.size() == 1);
    CHECK(t.size() == 0);
  }
  SUBCASE("non-scalar loss") {
    Tape t;
    const Tensor x = t.variable(Matrix(2, 1, 3.0));
    CHECK_THROWS_AS(t.backward(x), ContractError);
  }
}

TEST_CASE("finite_difference_gradient examples") {
  const Matrix x = Matrix::from_rows({{1, 2}});
  const Matrix ones = finite_difference_gradient(
      [](const Matrix &m) {
        double s = 0.0;
        for (double v : m.data) s += v;
        return s;
      },
      x);
  for (double v : ones.data) CHECK(std::abs(v - 1.0) < 1e-8);
  const Matrix g = finite_difference_gradient(
      [](const Matrix &m) {
        double s = 0.0;
        for (double v : m.data) s += v * v;
        return s;
      },
      x);
  CHECK(std::abs(g(0, 0) - 2.0) < 1e-8);
  CHECK(std::abs(g(0, 1) - 4.0) < 1e-8);
}

TEST_CASE("every primitive and every loss passes the finite-difference check at 10 seeds") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto report = run_gradcheck(seed);
    CHECK(report.cases.size() == all_primitives().size() + 3);
    for (const auto &c : report.cases) {
      INFO("seed " << seed << " case " << c.name << " error " << c.max_rel_error);
      CHECK(c.passed);
      CHECK(c.max_rel_error < 1e-4);
    }
  }
}
