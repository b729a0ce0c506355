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

#include "ssmtl/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "ssmtl/errors.hpp"
#include "ssmtl/random.hpp"

namespace ssmtl {

void SyntheticGraphConfig::validate() const {
  auto fail = [](const std::string &m) { throw ValidationError("synthetic graph: " + m); };
  if (num_nodes < 2) fail("num_nodes must be >= 2");
  if (num_communities < 1 || num_communities > num_nodes) fail("num_communities must be in [1, num_nodes]");
  if (!(p_in >= 0.0 && p_in <= 1.0) || !(p_out >= 0.0 && p_out <= 1.0)) fail("probabilities must be in [0, 1]");
  if (!(p_in > p_out)) fail("p_in must exceed p_out");
  if (feature_dim < num_communities) fail("feature_dim must be >= num_communities");
  if (!(cold_start_fraction >= 0.0 && cold_start_fraction <= 0.5)) {
    fail("cold_start_fraction must be in [0, 0.5]");
  }
  if (!(indicator_noise >= 0.0) || !std::isfinite(indicator_noise)) fail("indicator_noise must be >= 0");
}

SyntheticGraph generate_synthetic_graph(const SyntheticGraphConfig &cfg) {
  cfg.validate();
  const size_t n = cfg.num_nodes;
  SyntheticGraph out;
  out.community.resize(n);
  for (size_t i = 0; i < n; ++i) {
    out.community[i] = static_cast<uint32_t>(i * cfg.num_communities / n);
  }

  Rng edge_rng(derive_seed(cfg.seed, 1));
  std::vector<std::vector<NodeId>> adj(n);
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      const double p = out.community[u] == out.community[v] ? cfg.p_in : cfg.p_out;
      if (p > 0.0 && edge_rng.bernoulli(p)) {
        adj[u].push_back(v);
        adj[v].push_back(u);
      }
    }
  }

  Rng cold_rng(derive_seed(cfg.seed, 2));
  const auto num_cold = static_cast<size_t>(std::llround(cfg.cold_start_fraction * static_cast<double>(n)));
  std::vector<NodeId> order(n);
  for (NodeId i = 0; i < n; ++i) order[i] = i;
  for (size_t i = 0; i < num_cold; ++i) std::swap(order[i], order[i + cold_rng.below(n - i)]);
  out.cold_start.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(num_cold));
  for (NodeId u : out.cold_start) {
    auto &nb = adj[u];
    if (nb.size() <= kColdStartDegreeCap) continue;
    std::sort(nb.begin(), nb.end());
    cold_rng.shuffle(std::span<NodeId>(nb));
    for (size_t i = kColdStartDegreeCap; i < nb.size(); ++i) {
      auto &back = adj[nb[i]];
      back.erase(std::find(back.begin(), back.end(), u));
    }
    nb.resize(kColdStartDegreeCap);
  }

  Rng feat_rng(derive_seed(cfg.seed, 3));
  Matrix features(n, cfg.feature_dim);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < cfg.feature_dim; ++j) {
      if (j < cfg.num_communities) {
        features(i, j) = (out.community[i] == j ? 1.0 : 0.0) + cfg.indicator_noise * feat_rng.normal();
      } else {
        features(i, j) = feat_rng.normal();
      }
    }
  }

  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v : adj[u]) {
      if (u < v) edges.push_back({u, v});
    }
  }
  out.graph = GraphStore::build(std::move(features), edges);
  std::sort(out.cold_start.begin(), out.cold_start.end());
  return out;
}

}  // namespace ssmtl
