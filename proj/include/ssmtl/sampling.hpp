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

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ssmtl/graph.hpp"
#include "ssmtl/matrix.hpp"

namespace ssmtl {

inline constexpr size_t kUnlimitedFanout = std::numeric_limits<size_t>::max();

/// Directed edge between local node ids of a Subgraph.
struct LocalEdge {
  uint32_t src = 0;
  uint32_t dst = 0;
  friend auto operator<=>(const LocalEdge &, const LocalEdge &) = default;
};

/// Sampled neighborhood with local re-indexing. Sampling roots (queries and,
/// for retrieval examples, candidates) sit at hop 0; every other node was
/// reached from a root within k hops. Both directions of every undirected
/// edge are present in `local_edges`.
struct Subgraph {
  Matrix local_features;
  std::vector<LocalEdge> local_edges;
  std::vector<NodeId> global_ids;
  std::vector<uint32_t> query_locals;
  std::vector<uint32_t> hop_of;

  size_t num_nodes() const { return global_ids.size(); }
};

/// Neighborhood sampler shared by every sampling entry point. Expands from
/// `roots` for `k` hops; each expanded node contributes at most `fanout`
/// neighbors drawn uniformly without replacement. Edges in `hidden` are
/// treated as absent. Roots get local ids 0..roots.size()-1 in order
/// (duplicates collapse onto the first occurrence).
Subgraph sample_neighborhood(const GraphStore &graph, std::span<const NodeId> roots, size_t k,
                             size_t fanout, uint64_t rng_seed, std::span<const Edge> hidden = {});

/// k-hop neighborhood of a single query user.
Subgraph khop_subgraph(const GraphStore &graph, NodeId query, size_t k, size_t fanout,
                       uint64_t rng_seed);

/// One query with M = 1 + num_negatives candidates. The positive candidate
/// is always first; its edge to the query is hidden from the subgraph.
struct RetrievalExample {
  Subgraph subgraph;
  uint32_t query_local = 0;
  std::vector<uint32_t> candidate_locals;
  std::vector<double> labels;
};

/// Returns nullopt when the query has no neighbors (caller draws another
/// query). Throws ValidationError when fewer than `num_negatives`
/// non-neighbors exist.
std::optional<RetrievalExample> sample_retrieval_example(const GraphStore &graph, NodeId query,
                                                         size_t num_negatives, size_t k,
                                                         size_t fanout, uint64_t rng_seed);

/// Several retrieval examples merged into one subgraph so shared nodes are
/// encoded once. Row b of `candidate_locals`/`labels` belongs to query b.
struct RetrievalBatch {
  Subgraph subgraph;
  size_t num_candidates = 0;
  std::vector<uint32_t> candidate_locals;  // batch_size x num_candidates, row-major
  Matrix labels;                           // batch_size x num_candidates, one-hot rows
  std::vector<Edge> hidden_edges;          // the positive edges, canonical form

  size_t batch_size() const { return subgraph.query_locals.size(); }
};

/// Draws up to `batch_size` distinct queries with degree >= 1. The batch can
/// come back smaller (even empty) when the graph has too few such nodes.
RetrievalBatch sample_retrieval_batch(const GraphStore &graph, size_t batch_size,
                                      size_t num_negatives, size_t k, size_t fanout,
                                      uint64_t rng_seed);

struct AugmentationConfig {
  double edge_drop_prob = 0.2;
  double feature_drop_prob = 0.2;
  double mask_value = 0.0;
  uint64_t seed = 0;

  void validate() const;
};

/// Drops each undirected edge with probability p; both directions go together.
Subgraph augment_edge_drop(const Subgraph &sub, double p, uint64_t rng_seed);

/// Zeroes each feature column (across all nodes) with probability p.
Subgraph augment_feature_drop(const Subgraph &sub, double p, uint64_t rng_seed);

struct MaskedSubgraph {
  Subgraph subgraph;
  Matrix originals;  // one row per query local, in query_locals order
};

/// Overwrites every query row with `mask_value` and returns the prior rows.
MaskedSubgraph mask_query_features(const Subgraph &sub, double mask_value);

}  // namespace ssmtl
