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
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ssmtl/embedding.hpp"
#include "ssmtl/graph.hpp"
#include "ssmtl/synthetic.hpp"
#include "ssmtl/trainer.hpp"

namespace ssmtl {

// ---------------------------------------------------------------------------
// Held-out edge split.

struct EdgeSplit {
  GraphStore train;
  /// Each held-out edge is oriented (query, target) by a fair coin.
  std::vector<Edge> heldout;
};

/// Removes max(1, floor(fraction * E)) uniformly chosen edges.
/// fraction must lie in (0, 0.5).
EdgeSplit split_edges(const GraphStore &graph, double holdout_fraction, uint64_t rng_seed);

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalSettings {
  double holdout_fraction = 0.1;
  std::vector<size_t> k_list{1, 5, 10, 20};
  /// Queries whose training degree is at most this form the cold-start cohort.
  size_t cold_start_degree = 2;
  uint64_t seed = 0;

  void validate() const;
};

inline constexpr size_t kMrrRankCap = 100;
inline constexpr int kEvalReportVersion = 1;

struct CohortMetrics {
  size_t num_queries = 0;
  std::map<size_t, double> recall;  // k -> fraction
  double mrr = 0.0;

  friend bool operator==(const CohortMetrics &, const CohortMetrics &) = default;
};

struct EvalReport {
  int version = kEvalReportVersion;
  /// Hex digest of the full graph and the eval settings. Runs are comparable
  /// only when these match.
  std::string config_fingerprint;
  CohortMetrics all;
  CohortMetrics cold_start;

  friend bool operator==(const EvalReport &, const EvalReport &) = default;
};

nlohmann::json to_json(const EvalReport &report);
/// Rejects other versions and malformed documents with ValidationError.
EvalReport eval_report_from_json(const nlohmann::json &j);
EvalReport load_eval_report(const std::filesystem::path &path);

std::string eval_fingerprint(const GraphStore &full_graph, const EvalSettings &settings);

/// Ranks each held-out target among all nodes except the query and its
/// training neighbors. Rank r counts toward recall@k when r <= k and adds
/// 1/r to MRR when r <= kMrrRankCap.
EvalReport evaluate_embeddings(const EmbeddingTable &table, const GraphStore &train_graph,
                               const std::vector<Edge> &heldout, const EvalSettings &settings,
                               std::string fingerprint, size_t num_threads = 1);

/// Exports embeddings from `train_graph` with the model's sampling settings,
/// then evaluates them.
EvalReport evaluate(const TrainedModel &model, const GraphStore &train_graph,
                    const std::vector<Edge> &heldout, const EvalSettings &settings,
                    std::string fingerprint, size_t num_threads = 1);

// ---------------------------------------------------------------------------
// Run comparison.

struct MetricDelta {
  std::string metric;  // "recall@10", "mrr"
  double baseline = 0.0;
  double ssmtl = 0.0;
  /// (ssmtl - baseline) / baseline; absent when baseline is 0.
  std::optional<double> relative;
  bool regressed = false;
};

struct DeltaReport {
  double margin = 0.01;
  std::vector<MetricDelta> all;
  std::vector<MetricDelta> cold_start;
  /// Some metric fell below baseline by more than `margin` (relative).
  bool negative_transfer = false;
};

inline constexpr double kDefaultNegativeTransferMargin = 0.01;

/// Throws ValidationError when the fingerprints or the metric sets differ.
DeltaReport compare_runs(const EvalReport &baseline, const EvalReport &ssmtl,
                         double margin = kDefaultNegativeTransferMargin);
nlohmann::json to_json(const DeltaReport &report);

// ---------------------------------------------------------------------------
// Run configuration and pipeline.

struct GraphFiles {
  std::filesystem::path edges;
  std::filesystem::path features;
};

struct RunConfig {
  TrainConfig train;
  std::variant<GraphFiles, SyntheticGraphConfig> graph;
  EvalSettings eval;
  std::filesystem::path output_dir;
  /// Worker threads for embedding export and evaluation.
  size_t num_threads = 1;

  void validate() const;
};

/// TrainConfig fields sit at the top level next to "graph", "eval",
/// "output_dir" and "num_threads". Relative paths resolve against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json &j, const std::filesystem::path &base_dir = {});
nlohmann::json to_json(const RunConfig &cfg);
RunConfig load_run_config(const std::filesystem::path &path);

/// Loads or generates the full graph and splits it.
struct PreparedData {
  GraphStore full;
  EdgeSplit split;
  std::string fingerprint;
};
PreparedData prepare_data(const RunConfig &cfg);

struct RunResult {
  TrainedModel model;
  EvalReport report;
};

/// Trains on the split graph and evaluates. When `output_dir` is set it
/// receives metrics.jsonl, checkpoints, model.json and eval.json.
RunResult run_experiment(const RunConfig &cfg, std::optional<TrainState> resume = std::nullopt);

/// Writes `text` to `path` via a temporary file and a rename.
void write_file_atomic(const std::filesystem::path &path, const std::string &text);

}  // namespace ssmtl
