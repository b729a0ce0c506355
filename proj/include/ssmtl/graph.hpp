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
#include <filesystem>
#include <span>
#include <vector>

#include "ssmtl/matrix.hpp"

namespace ssmtl {

using NodeId = uint32_t;

/// Undirected edge. Canonical form has u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  Edge canonical() const { return u < v ? *this : Edge{v, u}; }
  friend auto operator<=>(const Edge &, const Edge &) = default;
};

/// Immutable attributed graph: n x d feature matrix plus symmetric adjacency
/// stored in CSR form with sorted neighbor lists.
class GraphStore {
 public:
  GraphStore() = default;

  /// Validates ids and features, then symmetrizes and deduplicates `edges`.
  /// Self-loops are dropped.
  static GraphStore build(Matrix features, std::span<const Edge> edges);

  size_t num_nodes() const { return features_.rows; }
  size_t feature_dim() const { return features_.cols; }
  const Matrix &features() const { return features_; }

  std::span<const NodeId> neighbors(NodeId node) const {
    return {targets_.data() + offsets_[node], offsets_[node + 1] - offsets_[node]};
  }
  size_t degree(NodeId node) const { return offsets_[node + 1] - offsets_[node]; }
  bool has_edge(NodeId a, NodeId b) const;

  /// Number of undirected edges.
  size_t num_edges() const { return targets_.size() / 2; }
  /// All undirected edges in canonical form, sorted.
  std::vector<Edge> edges() const;

  /// 64-bit content hash over features and adjacency.
  uint64_t fingerprint() const;

  friend bool operator==(const GraphStore &, const GraphStore &) = default;

 private:
  Matrix features_;
  std::vector<size_t> offsets_{0};
  std::vector<NodeId> targets_;
};

/// Reads an edge list (`u v` per line, `#` comments) and a feature file (one
/// whitespace-separated row per node). The feature file defines n and d.
GraphStore load_graph(const std::filesystem::path &edge_list_path,
                      const std::filesystem::path &features_path);

/// Writes the canonical edge list and round-trip-exact feature rows.
void save_graph(const GraphStore &graph, const std::filesystem::path &edge_list_path,
                const std::filesystem::path &features_path);

/// Parses the two formats from in-memory text. `source` names the input in
/// error messages.
std::vector<Edge> parse_edge_list(std::string_view text, std::string_view source = "edges");
Matrix parse_feature_rows(std::string_view text, std::string_view source = "features");

}  // namespace ssmtl
