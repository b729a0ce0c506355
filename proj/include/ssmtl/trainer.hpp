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
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ssmtl/encoder.hpp"
#include "ssmtl/graph.hpp"
#include "ssmtl/objectives.hpp"
#include "ssmtl/sampling.hpp"

namespace ssmtl {

struct TaskSet {
  bool retrieval = true;
  bool cca = true;
  bool mae = true;

  bool empty() const { return !retrieval && !cca && !mae; }
  static TaskSet retrieval_only() { return {true, false, false}; }
  friend bool operator==(const TaskSet &, const TaskSet &) = default;
};

struct SamplingConfig {
  size_t k = 2;
  size_t fanout = 10;
  size_t num_negatives = 15;
};

struct TrainConfig {
  size_t steps = 1000;
  size_t batch_size = 32;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global gradient-norm clip; 0 disables clipping.
  double grad_clip_norm = 5.0;
  LossWeights weights;
  CcaConfig cca;
  MaeConfig mae;
  AugmentationConfig augmentation;
  SamplingConfig sampling;
  /// layer_dims.front() must equal the graph feature dim.
  EncoderConfig encoder;
  uint64_t seed = 0;
  /// Checkpoint period in steps; 0 writes only the final checkpoint.
  size_t checkpoint_every = 0;
  TaskSet enabled_tasks;
  /// Sample step t+1 on a worker thread while step t computes.
  bool prefetch = true;

  void validate() const;
};

struct OptimizerState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  uint64_t step = 0;

  static OptimizerState zeros_like(const EncoderParams &params);
  friend bool operator==(const OptimizerState &, const OptimizerState &) = default;
};

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over parallel lists. An empty gradient counts as zero.
void adam_update(std::span<Matrix *const> params, std::span<const Matrix> grads,
                 OptimizerState &opt, const AdamHyper &hyper);
void adam_update(EncoderParams &params, std::span<const Matrix> grads, OptimizerState &opt,
                 const AdamHyper &hyper);

/// Everything a step needs that depends only on (graph, config, step index):
/// the sampled batch and every augmented view.
struct StepInputs {
  size_t step = 0;
  RetrievalBatch batch;
  std::optional<Subgraph> cca_view_a;
  std::optional<Subgraph> cca_view_b;
  std::optional<MaskedSubgraph> mae_view;
};

StepInputs prepare_step(const GraphStore &graph, const TrainConfig &cfg, size_t step_index);

struct StepResult {
  LossReport report;
  bool skipped = false;  // empty batch
  /// Parameters (by EncoderParams::named_tensors order) that got a gradient.
  std::vector<bool> received_gradient;
};

/// One optimization step of the multitask objective. Updates `params` and
/// `opt` in place.
StepResult train_step(const StepInputs &inputs, EncoderParams &params, OptimizerState &opt,
                      const TrainConfig &cfg);
StepResult train_step(const GraphStore &graph, EncoderParams &params, OptimizerState &opt,
                      const TrainConfig &cfg, size_t step_index);

/// The single-task retrieval baseline, written independently of the
/// multitask path. Uses the same sampling stream as train_step.
StepResult baseline_train_step(const GraphStore &graph, EncoderParams &params, OptimizerState &opt,
                               const TrainConfig &cfg, size_t step_index);

/// Parameters, optimizer state and the index of the next step to run.
struct TrainState {
  EncoderParams params;
  OptimizerState optimizer;
  size_t next_step = 0;

  friend bool operator==(const TrainState &, const TrainState &) = default;
};

TrainState initial_state(const TrainConfig &cfg);

struct TrainedModel {
  TrainConfig config;
  TrainState state;
  std::vector<LossReport> history;  // steps run by this call
  size_t skipped_steps = 0;
};

struct TrainHooks {
  /// Called after each step with its wall-clock duration.
  std::function<void(size_t step, const LossReport &report, double wall_ms)> on_step;
  /// Checkpoints go here when set: `ckpt-<step>.json` plus `model.json`.
  std::optional<std::filesystem::path> checkpoint_dir;
};

/// Runs steps `start.next_step` .. cfg.steps-1.
TrainedModel train(const GraphStore &graph, const TrainConfig &cfg, TrainState start,
                   const TrainHooks &hooks = {});
TrainedModel train(const GraphStore &graph, const TrainConfig &cfg, const TrainHooks &hooks = {});

/// One JSON object: {"step", "retrieval", "cca", "mae", "combined", "wall_ms"}.
/// wall_ms is omitted when negative.
std::string metrics_line(size_t step, const LossReport &report, double wall_ms);

}  // namespace ssmtl
