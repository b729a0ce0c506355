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
#include <string>
#include <vector>

#include "ssmtl/embedding.hpp"

namespace ssmtl {

struct AnnConfig {
  size_t m_conn = 16;
  size_t ef_construction = 100;
  uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const AnnConfig &, const AnnConfig &) = default;
};

/// Hierarchical navigable small-world graph over dot-product similarity.
///
/// Nodes are inserted in id order. Each node draws a level
/// floor(-ln(U) / ln(m_conn)); upper layers are searched greedily and each
/// layer at or below the node's level with a beam of ef_construction. A node
/// keeps the m_conn most similar beam results as neighbors, and overfull
/// neighbor lists (more than m_conn, or 2 * m_conn at layer 0) are pruned to
/// the most similar entries. A final pass re-links any layer-0 node that
/// pruning left unreachable from the entry point.
class AnnIndex {
 public:
  AnnIndex() = default;

  static AnnIndex build(const EmbeddingTable &table, const AnnConfig &cfg);

  /// Beam search with `ef_search` (must be >= k). Excluded ids are traversed
  /// but never returned. Results are sorted by score, then id.
  std::vector<ScoredId> search(std::span<const double> query, size_t k, size_t ef_search,
                               std::span<const NodeId> exclude = {}) const;

  size_t size() const { return levels_.size(); }
  size_t dim() const { return vectors_.cols; }
  NodeId entry_point() const { return entry_; }
  int max_level() const { return max_level_; }
  int level_of(NodeId id) const { return levels_[id]; }
  std::span<const NodeId> neighbors(NodeId id, int level) const { return links_[id][level]; }
  const AnnConfig &config() const { return cfg_; }

  /// Structural invariants: layer membership, degree caps, layer-0
  /// reachability from the entry point. Returns a description of the first
  /// violation, or an empty string.
  std::string audit() const;

  void save(const std::filesystem::path &path) const;
  static AnnIndex load(const std::filesystem::path &path);

  friend bool operator==(const AnnIndex &, const AnnIndex &) = default;

 private:
  struct Candidate {
    double score;
    NodeId id;
  };

  double score(NodeId id, std::span<const double> q) const { return dot(vectors_.row(id), q); }
  size_t max_degree(int level) const { return level == 0 ? 2 * cfg_.m_conn : cfg_.m_conn; }
  NodeId greedy_descend(std::span<const double> q, NodeId ep, int level) const;
  std::vector<Candidate> search_layer(std::span<const double> q, NodeId ep, size_t ef, int level) const;
  void insert(NodeId id, int level);
  void shrink(NodeId id, int level);
  void repair_reachability();
  std::vector<unsigned char> reachable_at_base() const;

  AnnConfig cfg_;
  Matrix vectors_;
  std::vector<int> levels_;
  std::vector<std::vector<std::vector<NodeId>>> links_;  // [node][level]
  NodeId entry_ = 0;
  int max_level_ = -1;
};

}  // namespace ssmtl
