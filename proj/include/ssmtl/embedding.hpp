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

#include <filesystem>
#include <span>
#include <vector>

#include "ssmtl/encoder.hpp"
#include "ssmtl/graph.hpp"
#include "ssmtl/matrix.hpp"

namespace ssmtl {

/// Row i is the embedding of global node i.
struct EmbeddingTable {
  Matrix values;

  size_t num_nodes() const { return values.rows; }
  size_t dim() const { return values.cols; }
  std::span<const double> row(NodeId id) const { return values.row(id); }

  friend bool operator==(const EmbeddingTable &, const EmbeddingTable &) = default;
};

/// Encodes every node's own k-hop neighborhood (fanout-capped, seeded by the
/// node id) and keeps the node's row. Work is split over `num_threads`; the
/// result does not depend on the thread count.
EmbeddingTable export_embeddings(const EncoderParams &params, const GraphStore &graph, size_t k,
                                 size_t fanout, size_t num_threads = 1);

struct ScoredId {
  NodeId id = 0;
  double score = 0.0;
  friend bool operator==(const ScoredId &, const ScoredId &) = default;
};

/// Higher score first, then lower id.
inline bool ranks_before(const ScoredId &a, const ScoredId &b) {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

struct TopK {
  std::vector<ScoredId> items;
  /// Set when fewer than k non-excluded candidates existed.
  bool truncated = false;
};

double dot(std::span<const double> a, std::span<const double> b);

/// Exact dot-product top-k over the whole table, skipping `exclude`.
TopK exact_topk(const EmbeddingTable &table, std::span<const double> query, size_t k,
                std::span<const NodeId> exclude = {});

/// Text: "num_nodes dim" header line then one row per node.
/// Binary: "SSMTLEMB", u64 num_nodes, u64 dim, little-endian doubles.
void save_embeddings(const EmbeddingTable &table, const std::filesystem::path &path, bool binary);
/// Detects the variant from the leading bytes.
EmbeddingTable load_embeddings(const std::filesystem::path &path);

}  // namespace ssmtl
