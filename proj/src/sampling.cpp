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

#include "ssmtl/sampling.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "ssmtl/errors.hpp"
#include "ssmtl/random.hpp"

namespace ssmtl {

namespace {

uint64_t edge_key(NodeId a, NodeId b) {
  if (a > b) std::swap(a, b);
  return (static_cast<uint64_t>(a) << 32) | b;
}

void check_probability(double p, const char *name) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ValidationError(std::string(name) + " must be in [0, 1), got " + std::to_string(p));
  }
}

struct Candidates {
  NodeId positive;
  std::vector<NodeId> negatives;
};

/// Positive: uniform neighbor. Negatives: uniform distinct non-neighbors.
Candidates draw_candidates(const GraphStore &graph, NodeId query, size_t num_negatives, Rng &rng) {
  auto nb = graph.neighbors(query);
  Candidates c{nb[rng.below(nb.size())], {}};
  const size_t n = graph.num_nodes();
  const size_t available = n - 1 - nb.size();
  if (available < num_negatives) {
    throw ValidationError("query " + std::to_string(query) + " has " + std::to_string(available) +
                          " non-neighbors, " + std::to_string(num_negatives) + " negatives requested");
  }
  c.negatives.reserve(num_negatives);
  if (available < 2 * num_negatives + 16) {
    std::vector<NodeId> pool;
    pool.reserve(available);
    for (NodeId v = 0; v < n; ++v) {
      if (v != query && !graph.has_edge(query, v)) pool.push_back(v);
    }
    for (size_t i = 0; i < num_negatives; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
      c.negatives.push_back(pool[i]);
    }
    return c;
  }
  std::unordered_set<NodeId> taken;
  while (c.negatives.size() < num_negatives) {
    const auto v = static_cast<NodeId>(rng.below(n));
    if (v == query || graph.has_edge(query, v) || !taken.insert(v).second) continue;
    c.negatives.push_back(v);
  }
  return c;
}

}  // namespace

void AugmentationConfig::validate() const {
  check_probability(edge_drop_prob, "edge_drop_prob");
  check_probability(feature_drop_prob, "feature_drop_prob");
  if (!std::isfinite(mask_value)) throw ValidationError("mask_value must be finite");
}

Subgraph sample_neighborhood(const GraphStore &graph, std::span<const NodeId> roots, size_t k,
                             size_t fanout, uint64_t rng_seed, std::span<const Edge> hidden) {
  if (k < 1) throw ValidationError("hop count k must be >= 1");
  if (fanout < 1) throw ValidationError("fanout must be >= 1");
  for (NodeId r : roots) {
    if (r >= graph.num_nodes()) {
      throw ValidationError("node " + std::to_string(r) + " is not in the graph (n=" +
                            std::to_string(graph.num_nodes()) + ")");
    }
  }
  std::unordered_set<uint64_t> hidden_keys;
  for (const Edge &e : hidden) hidden_keys.insert(edge_key(e.u, e.v));

  Rng rng(rng_seed);
  Subgraph sub;
  std::unordered_map<NodeId, uint32_t> local_of;
  auto intern = [&](NodeId g, uint32_t hop) -> std::pair<uint32_t, bool> {
    auto [it, inserted] = local_of.emplace(g, static_cast<uint32_t>(sub.global_ids.size()));
    if (inserted) {
      sub.global_ids.push_back(g);
      sub.hop_of.push_back(hop);
    }
    return {it->second, inserted};
  };

  std::vector<NodeId> frontier;
  for (NodeId r : roots) {
    if (intern(r, 0).second) frontier.push_back(r);
  }

  std::unordered_set<uint64_t> seen_edges;
  std::vector<std::pair<uint32_t, uint32_t>> undirected;
  std::vector<NodeId> scratch;
  for (size_t hop = 0; hop < k && !frontier.empty(); ++hop) {
    std::vector<NodeId> next;
    for (NodeId u : frontier) {
      scratch.clear();
      for (NodeId v : graph.neighbors(u)) {
        if (hidden_keys.empty() || !hidden_keys.count(edge_key(u, v))) scratch.push_back(v);
      }
      size_t take = scratch.size();
      if (fanout < take) {
        for (size_t i = 0; i < fanout; ++i) {
          std::swap(scratch[i], scratch[i + rng.below(scratch.size() - i)]);
        }
        take = fanout;
      }
      const uint32_t lu = local_of.at(u);
      for (size_t i = 0; i < take; ++i) {
        const NodeId v = scratch[i];
        auto [lv, fresh] = intern(v, static_cast<uint32_t>(hop + 1));
        if (fresh) next.push_back(v);
        if (seen_edges.insert(edge_key(lu, lv)).second) undirected.emplace_back(lu, lv);
      }
    }
    frontier = std::move(next);
  }

  sub.local_edges.reserve(undirected.size() * 2);
  for (auto [a, b] : undirected) {
    sub.local_edges.push_back({a, b});
    sub.local_edges.push_back({b, a});
  }
  const Matrix &X = graph.features();
  sub.local_features = Matrix(sub.global_ids.size(), X.cols);
  for (size_t i = 0; i < sub.global_ids.size(); ++i) {
    auto src = X.row(sub.global_ids[i]);
    std::copy(src.begin(), src.end(), sub.local_features.row(i).begin());
  }
  return sub;
}

Subgraph khop_subgraph(const GraphStore &graph, NodeId query, size_t k, size_t fanout,
                       uint64_t rng_seed) {
  const NodeId roots[1] = {query};
  Subgraph sub = sample_neighborhood(graph, roots, k, fanout, rng_seed);
  sub.query_locals = {0};
  return sub;
}

std::optional<RetrievalExample> sample_retrieval_example(const GraphStore &graph, NodeId query,
                                                         size_t num_negatives, size_t k,
                                                         size_t fanout, uint64_t rng_seed) {
  if (query >= graph.num_nodes()) {
    throw ValidationError("query " + std::to_string(query) + " is not in the graph");
  }
  if (graph.degree(query) == 0) return std::nullopt;
  Rng rng(derive_seed(rng_seed, 1));
  Candidates c = draw_candidates(graph, query, num_negatives, rng);

  std::vector<NodeId> roots{query, c.positive};
  roots.insert(roots.end(), c.negatives.begin(), c.negatives.end());
  const Edge hidden[1] = {Edge{query, c.positive}.canonical()};

  RetrievalExample ex;
  ex.subgraph = sample_neighborhood(graph, roots, k, fanout, derive_seed(rng_seed, 2), hidden);
  ex.subgraph.query_locals = {0};
  ex.query_local = 0;
  for (uint32_t i = 1; i < roots.size(); ++i) ex.candidate_locals.push_back(i);
  ex.labels.assign(ex.candidate_locals.size(), 0.0);
  ex.labels[0] = 1.0;
  return ex;
}

RetrievalBatch sample_retrieval_batch(const GraphStore &graph, size_t batch_size,
                                      size_t num_negatives, size_t k, size_t fanout,
                                      uint64_t rng_seed) {
  Rng rng(derive_seed(rng_seed, 1));
  const size_t n = graph.num_nodes();
  std::vector<NodeId> queries;
  std::vector<Candidates> cands;
  std::unordered_set<NodeId> chosen;
  const size_t max_attempts = 100 * batch_size + 100;
  for (size_t attempt = 0; attempt < max_attempts && queries.size() < batch_size && n > 0;
       ++attempt) {
    const auto q = static_cast<NodeId>(rng.below(n));
    if (graph.degree(q) == 0 || chosen.count(q)) continue;
    chosen.insert(q);
    queries.push_back(q);
    cands.push_back(draw_candidates(graph, q, num_negatives, rng));
  }

  RetrievalBatch batch;
  batch.num_candidates = 1 + num_negatives;
  if (queries.empty()) return batch;

  std::vector<NodeId> roots = queries;
  for (const auto &c : cands) {
    roots.push_back(c.positive);
    roots.insert(roots.end(), c.negatives.begin(), c.negatives.end());
  }
  for (size_t b = 0; b < queries.size(); ++b) {
    batch.hidden_edges.push_back(Edge{queries[b], cands[b].positive}.canonical());
  }
  batch.subgraph =
      sample_neighborhood(graph, roots, k, fanout, derive_seed(rng_seed, 2), batch.hidden_edges);

  std::unordered_map<NodeId, uint32_t> local_of;
  for (size_t i = 0; i < batch.subgraph.global_ids.size(); ++i) {
    local_of.emplace(batch.subgraph.global_ids[i], static_cast<uint32_t>(i));
  }
  auto local = [&local_of](NodeId g) { return local_of.at(g); };
  batch.labels = Matrix(queries.size(), batch.num_candidates);
  for (size_t b = 0; b < queries.size(); ++b) {
    batch.subgraph.query_locals.push_back(static_cast<uint32_t>(b));
    batch.candidate_locals.push_back(local(cands[b].positive));
    for (NodeId neg : cands[b].negatives) batch.candidate_locals.push_back(local(neg));
    batch.labels(b, 0) = 1.0;
  }
  return batch;
}

Subgraph augment_edge_drop(const Subgraph &sub, double p, uint64_t rng_seed) {
  check_probability(p, "edge drop probability");
  Subgraph out = sub;
  if (p == 0.0) return out;
  Rng rng(rng_seed);
  // Decide once per undirected edge, in order of first appearance.
  std::unordered_map<uint64_t, bool> keep;
  keep.reserve(sub.local_edges.size());
  out.local_edges.clear();
  for (const LocalEdge &e : sub.local_edges) {
    const uint64_t key = edge_key(e.src, e.dst);
    auto it = keep.find(key);
    if (it == keep.end()) it = keep.emplace(key, !rng.bernoulli(p)).first;
    if (it->second) out.local_edges.push_back(e);
  }
  return out;
}

Subgraph augment_feature_drop(const Subgraph &sub, double p, uint64_t rng_seed) {
  check_probability(p, "feature drop probability");
  Subgraph out = sub;
  if (p == 0.0) return out;
  Rng rng(rng_seed);
  Matrix &X = out.local_features;
  for (size_t j = 0; j < X.cols; ++j) {
    if (!rng.bernoulli(p)) continue;
    for (size_t r = 0; r < X.rows; ++r) X(r, j) = 0.0;
  }
  return out;
}

MaskedSubgraph mask_query_features(const Subgraph &sub, double mask_value) {
  if (sub.query_locals.empty()) throw ValidationError("mask_query_features: subgraph has no query");
  MaskedSubgraph out{sub, Matrix(sub.query_locals.size(), sub.local_features.cols)};
  for (size_t i = 0; i < sub.query_locals.size(); ++i) {
    auto row = out.subgraph.local_features.row(sub.query_locals[i]);
    std::copy(row.begin(), row.end(), out.originals.row(i).begin());
    std::fill(row.begin(), row.end(), mask_value);
  }
  return out;
}

}  // namespace ssmtl
