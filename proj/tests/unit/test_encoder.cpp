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
#include <numeric>

#include "doctest.h"
#include "ssmtl/encoder.hpp"
#include "ssmtl/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ssmtl;
using namespace ssmtl::testing;

namespace {

EncoderConfig small_config(size_t din) {
  EncoderConfig c;
  c.layer_dims = {din, 6, 5};
  c.cca_hidden_dim = 4;
  c.cca_projection_dim = 3;
  c.mae_hidden_dim = 4;
  return c;
}

}  // namespace

TEST_CASE("gat_attention: self-loop only and symmetric neighbors") {
  Rng rng(0);
  const auto layer = random_layer(rng, 3, 4);
  const Matrix h = random_matrix(rng, 1, 3);
  const auto a = gat_attention(layer, h, {});
  REQUIRE(a.alpha.size() == 1);
  CHECK(a.alpha[0] == 1.0);

  const Matrix same(3, 3, 0.4);
  const std::vector<LocalEdge> star{{0, 1}, {1, 0}, {0, 2}, {2, 0}};
  const auto b = gat_attention(layer, same, star);
  for (size_t e = 0; e < b.alpha.size(); ++e) {
    if (b.center[e] == 0) CHECK(std::abs(b.alpha[e] - 1.0 / 3.0) < 1e-15);
  }
}

TEST_CASE("gat_attention: 3-node path matches the dense oracle") {
  Rng rng(0);
  const auto layer = random_layer(rng, 2, 3);
  const Matrix h = random_matrix(rng, 3, 2);
  const auto sub = make_subgraph(h, {{0, 1}, {1, 2}});
  const auto a = gat_attention(layer, h, sub.local_edges);
  // Dense attention for the same layer.
  const Matrix out = gat_layer_forward(layer, sub, h, true);
  CHECK(max_abs_diff(out, dense_gat(layer, h, {{0, 1}, {1, 2}}, true)) < 1e-12);
  std::vector<double> sums(3, 0.0);
  for (size_t e = 0; e < a.alpha.size(); ++e) sums[a.center[e]] += a.alpha[e];
  for (double s : sums) CHECK(std::abs(s - 1.0) < 1e-12);
}

TEST_CASE("gat_layer_forward equals the dense oracle on random graphs") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const size_t n = 1 + rng.below(10);
    const auto edges = random_edges(rng, n, 0.4);
    const auto layer = random_layer(rng, 4, 5);
    const Matrix h = random_matrix(rng, n, 4);
    const auto sub = make_subgraph(h, edges);
    for (bool final_layer : {false, true}) {
      CHECK(max_abs_diff(gat_layer_forward(layer, sub, h, final_layer), dense_gat(layer, h, edges, final_layer)) <
            1e-10);
    }
  }
}

TEST_CASE("gat_layer_forward degenerate cases") {
  Rng rng(2);
  const auto layer = random_layer(rng, 3, 4);
  const Matrix h = random_matrix(rng, 4, 3);
  const auto sub = make_subgraph(h, {});
  const Matrix out = gat_layer_forward(layer, sub, h, false);
  for (size_t i = 0; i < 4; ++i)
    for (size_t o = 0; o < 4; ++o) {
      double s = 0.0;
      for (size_t k = 0; k < 3; ++k) s += h(i, k) * layer.weight(k, o);
      CHECK(std::abs(out(i, o) - std::max(0.0, s)) < 1e-15);
    }
  const auto zero_sub = make_subgraph(Matrix(4, 3), {{0, 1}, {2, 3}});
  for (double v : gat_layer_forward(layer, zero_sub, Matrix(4, 3), false).data) CHECK(v == 0.0);
  CHECK_THROWS_AS(gat_layer_forward(layer, sub, Matrix(4, 2), false), ShapeError);
}

TEST_CASE("encode is permutation equivariant") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    const size_t n = 2 + rng.below(29);
    const auto edges = random_edges(rng, n, 0.15);
    const Matrix x = random_matrix(rng, n, 4);
    const auto params = init_params(small_config(4), seed);
    std::vector<uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<uint32_t>(perm));
    Matrix px(n, 4);
    for (size_t i = 0; i < n; ++i)
      for (size_t c = 0; c < 4; ++c) px(perm[i], c) = x(i, c);
    std::vector<std::pair<uint32_t, uint32_t>> pedges;
    for (auto [a, b] : edges) pedges.push_back({perm[a], perm[b]});
    const Matrix z = encode(params, make_subgraph(x, edges));
    const Matrix pz = encode(params, make_subgraph(px, pedges));
    // Same edge order: identical accumulation order, so equality is exact.
    bool exact = true;
    for (size_t i = 0; i < n; ++i)
      for (size_t c = 0; c < z.cols; ++c) exact = exact && z(i, c) == pz(perm[i], c);
    CHECK(exact);
    // Shuffled edge order changes only summation order.
    rng.shuffle(std::span<std::pair<uint32_t, uint32_t>>(pedges));
    const Matrix sz = encode(params, make_subgraph(px, pedges));
    double worst = 0.0;
    for (size_t i = 0; i < n; ++i)
      for (size_t c = 0; c < z.cols; ++c) worst = std::max(worst, std::abs(z(i, c) - sz(perm[i], c)));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("encode: k-hop locality on a path") {
  const auto params = init_params(small_config(3), 7);
  Rng rng(7);
  const Matrix x = random_matrix(rng, 6, 3);
  const std::vector<std::pair<uint32_t, uint32_t>> path{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}};
  const Matrix z = encode(params, make_subgraph(x, path));
  Matrix far = x;
  far(3, 0) += 5.0;
  far(5, 2) -= 3.0;
  const Matrix zf = encode(params, make_subgraph(far, path));
  for (size_t c = 0; c < z.cols; ++c) CHECK(z(0, c) == zf(0, c));
  Matrix near = x;
  near(2, 1) += 5.0;
  CHECK(max_abs_diff(encode(params, make_subgraph(near, path)), z) > 0.0);
}

TEST_CASE("encode: one layer is gat_layer_forward") {
  EncoderConfig cfg = small_config(3);
  cfg.layer_dims = {3, 4};
  const auto params = init_params(cfg, 1);
  Rng rng(1);
  const Matrix x = random_matrix(rng, 5, 3);
  const auto sub = make_subgraph(x, {{0, 1}, {1, 2}, {3, 4}});
  CHECK(encode(params, sub) == gat_layer_forward(params.layers[0], sub, x, true));
  CHECK(encode(params, sub) == encode(params, sub));
}

TEST_CASE("init_params") {
  EncoderConfig cfg = small_config(4);
  cfg.layer_dims = {4, 8, 8};
  const auto a = init_params(cfg, 3);
  CHECK(a == init_params(cfg, 3));
  CHECK_FALSE(a == init_params(cfg, 4));
  for (const auto &[name, m] : a.named_tensors()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m->rows + m->cols));
    for (double w : m->data) CHECK(std::abs(w) <= bound);
  }
  EncoderConfig wide = cfg;
  wide.layer_dims = {100, 100};
  const auto b = init_params(wide, 9);
  const Matrix &w = b.layers[0].weight;
  REQUIRE(w.data.size() == 10000);
  double mean = 0.0;
  for (double v : w.data) mean += v / 10000.0;
  const double bound = std::sqrt(6.0 / 200.0);
  CHECK(std::abs(mean) < 3.0 * bound / std::sqrt(3.0) / 100.0);
  EncoderConfig bad = cfg;
  bad.layer_dims = {4, 0};
  CHECK_THROWS_AS(init_params(bad, 0), ValidationError);
}

TEST_CASE("cca_head") {
  const auto params = init_params(small_config(3), 2);
  for (double v : cca_head(params, Matrix(4, 5)).data) CHECK(v == 0.0);
  EncoderConfig sq = small_config(3);
  sq.layer_dims = {3, 4};
  sq.cca_hidden_dim = 4;
  sq.cca_projection_dim = 4;
  auto p = init_params(sq, 0);
  p.cca_w1 = Matrix::identity(4);
  p.cca_w2 = Matrix::identity(4);
  const Matrix z = Matrix::from_rows({{1, -2, 3, -4}, {-1, 2, 0, 5}});
  const Matrix out = cca_head(p, z);
  CHECK(out == Matrix::from_rows({{1, 0, 3, 0}, {0, 2, 0, 5}}));
  CHECK_THROWS_AS(cca_head(p, Matrix(2, 3)), ShapeError);
}

TEST_CASE("mae_reconstruct") {
  const auto params = init_params(small_config(3), 5);
  SUBCASE("isolated query decodes the mask token") {
    Rng rng(3);
    const auto sub = make_subgraph(Matrix(1, 3, 0.7), {});
    const Matrix z = encode(params, sub);
    const Matrix r = mae_reconstruct(params, sub, z, 0.7);
    REQUIRE(r.rows == 1);
    REQUIRE(r.cols == 3);
    for (size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (size_t k = 0; k < params.mae_decoder.rows; ++k) s += 0.7 * params.mae_decoder(k, c);
      CHECK(std::abs(r(0, c) - s) < 1e-15);
    }
  }
  SUBCASE("output shape is m x d") {
    Rng rng(4);
    const auto sub = make_subgraph(random_matrix(rng, 6, 3), {{0, 1}, {1, 2}, {4, 5}});
    const Matrix r = mae_reconstruct(params, sub, encode(params, sub), 0.0);
    CHECK(r.rows == 6);
    CHECK(r.cols == 3);
  }
}
