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

#include "ssmtl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <sstream>

#include "json.hpp"

#include "ssmtl/checkpoint.hpp"
#include "ssmtl/errors.hpp"
#include "ssmtl/random.hpp"

namespace ssmtl {

namespace {

// Seed purposes within one step.
enum : uint64_t {
  kSeedBatch = 1,
  kSeedCcaEdgeA,
  kSeedCcaFeatA,
  kSeedCcaEdgeB,
  kSeedCcaFeatB,
  kSeedMaeEdge,
};

uint64_t step_seed(const TrainConfig &cfg, size_t step) { return derive_seed(cfg.seed, step); }

AdamHyper hyper_of(const TrainConfig &cfg) {
  return {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
}

/// Collects gradients in parameter order, clips by global norm, checks finiteness.
std::vector<Matrix> collect_gradients(const GradientMap &grads, const BoundEncoder &bound,
                                      double clip_norm, std::vector<bool> &received) {
  const auto handles = bound.tensors();
  std::vector<Matrix> out(handles.size());
  received.assign(handles.size(), false);
  double sq = 0.0;
  for (size_t i = 0; i < handles.size(); ++i) {
    if (!grads.contains(handles[i])) continue;
    received[i] = true;
    out[i] = grads.at(handles[i]);
    for (double g : out[i].data) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
  if (clip_norm > 0.0 && norm > clip_norm) {
    const double f = clip_norm / norm;
    for (auto &g : out)
      for (double &v : g.data) v *= f;
  }
  return out;
}

void write_checkpoint_or_abort(const std::filesystem::path &path, const TrainConfig &cfg,
                               const TrainState &state) {
  try {
    save_checkpoint(path, cfg, state);
  } catch (const Error &e) {
    throw IoError("checkpoint write failed after " + std::to_string(state.next_step) +
                  " completed steps; training aborted with partial state: " + e.what());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 1) throw ValidationError("steps must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be > 0");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ValidationError("adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be > 0");
  if (!(grad_clip_norm >= 0.0)) throw ValidationError("grad_clip_norm must be >= 0");
  if (enabled_tasks.empty()) throw ValidationError("enabled_tasks must not be empty");
  weights.validate(enabled_tasks.retrieval);
  cca.validate();
  mae.validate();
  augmentation.validate();
  if (sampling.k < 1) throw ValidationError("sampling k must be >= 1");
  if (sampling.fanout < 1) throw ValidationError("sampling fanout must be >= 1");
  if (sampling.num_negatives < 1) throw ValidationError("num_negatives must be >= 1");
  if (enabled_tasks.cca && batch_size * (1 + sampling.num_negatives) < 2) {
    throw ValidationError("cca needs at least 2 nodes per batch");
  }
  encoder.validate();
}

OptimizerState OptimizerState::zeros_like(const EncoderParams &params) {
  OptimizerState s;
  for (const auto &[name, m] : params.named_tensors()) {
    s.m.emplace_back(m->rows, m->cols);
    s.v.emplace_back(m->rows, m->cols);
  }
  return s;
}

void adam_update(std::span<Matrix *const> params, std::span<const Matrix> grads,
                 OptimizerState &opt, const AdamHyper &h) {
  if (grads.size() != params.size() || opt.m.size() != params.size() || opt.v.size() != params.size()) {
    throw ShapeError("adam_update: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " + std::to_string(opt.m.size()) +
                     " moments");
  }
  opt.step += 1;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    Matrix &p = *params[i];
    Matrix &m = opt.m[i];
    Matrix &v = opt.v[i];
    if (!m.same_shape(p) || !v.same_shape(p)) throw ShapeError("adam_update: moment shape mismatch");
    const bool zero = grads[i].empty();
    if (!zero && !grads[i].same_shape(p)) throw ShapeError("adam_update: gradient shape mismatch");
    for (size_t j = 0; j < p.size(); ++j) {
      const double g = zero ? 0.0 : grads[i].data[j];
      m.data[j] = h.beta1 * m.data[j] + (1.0 - h.beta1) * g;
      v.data[j] = h.beta2 * v.data[j] + (1.0 - h.beta2) * g * g;
      const double mhat = m.data[j] / c1;
      const double vhat = v.data[j] / c2;
      p.data[j] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
}

void adam_update(EncoderParams &params, std::span<const Matrix> grads, OptimizerState &opt,
                 const AdamHyper &hyper) {
  std::vector<Matrix *> ptrs;
  for (auto &[name, m] : params.named_tensors()) ptrs.push_back(m);
  adam_update(ptrs, grads, opt, hyper);
}

StepInputs prepare_step(const GraphStore &graph, const TrainConfig &cfg, size_t step_index) {
  const uint64_t seed = step_seed(cfg, step_index);
  StepInputs in;
  in.step = step_index;
  in.batch = sample_retrieval_batch(graph, cfg.batch_size, cfg.sampling.num_negatives,
                                    cfg.sampling.k, cfg.sampling.fanout,
                                    derive_seed(seed, kSeedBatch));
  if (in.batch.batch_size() == 0) return in;
  const auto &aug = cfg.augmentation;
  const Subgraph &sub = in.batch.subgraph;
  if (cfg.enabled_tasks.cca) {
    in.cca_view_a = augment_feature_drop(
        augment_edge_drop(sub, aug.edge_drop_prob, derive_seed(seed, kSeedCcaEdgeA, aug.seed)),
        aug.feature_drop_prob, derive_seed(seed, kSeedCcaFeatA, aug.seed));
    in.cca_view_b = augment_feature_drop(
        augment_edge_drop(sub, aug.edge_drop_prob, derive_seed(seed, kSeedCcaEdgeB, aug.seed)),
        aug.feature_drop_prob, derive_seed(seed, kSeedCcaFeatB, aug.seed));
  }
  if (cfg.enabled_tasks.mae) {
    in.mae_view = mask_query_features(
        augment_edge_drop(sub, aug.edge_drop_prob, derive_seed(seed, kSeedMaeEdge, aug.seed)),
        aug.mask_value);
  }
  return in;
}

StepResult train_step(const StepInputs &in, EncoderParams &params, OptimizerState &opt,
                      const TrainConfig &cfg) {
  StepResult result;
  if (in.batch.batch_size() == 0) {
    result.skipped = true;
    return result;
  }
  Tape tape;
  const BoundEncoder enc = bind(tape, params, true);
  const RetrievalBatch &batch = in.batch;

  std::optional<Tensor> retrieval, cca, mae;
  if (cfg.enabled_tasks.retrieval) {
    const Tensor z = encode(enc, MessageGraph::from(batch.subgraph),
                            tape.constant(batch.subgraph.local_features));
    retrieval = retrieval_loss(
        retrieval_logits(z, batch.subgraph.query_locals, batch.candidate_locals, batch.num_candidates),
        batch.labels);
  }
  if (cfg.enabled_tasks.cca) {
    const Tensor za = cca_head(enc, encode(enc, MessageGraph::from(*in.cca_view_a),
                                           tape.constant(in.cca_view_a->local_features)));
    const Tensor zb = cca_head(enc, encode(enc, MessageGraph::from(*in.cca_view_b),
                                           tape.constant(in.cca_view_b->local_features)));
    cca = cca_loss(za, zb, cfg.cca);
  }
  if (cfg.enabled_tasks.mae) {
    const Subgraph &view = in.mae_view->subgraph;
    const MessageGraph mg = MessageGraph::from(view);
    const Tensor z = encode(enc, mg, tape.constant(view.local_features));
    const Tensor recon = mae_reconstruct(enc, mg, view.query_locals, cfg.augmentation.mask_value, z);
    std::vector<size_t> rows(view.query_locals.begin(), view.query_locals.end());
    mae = mae_loss(tape.constant(in.mae_view->originals), op::gather_rows(recon, std::move(rows)),
                   cfg.mae);
  }

  const Tensor loss = combined_loss(retrieval, cca, mae, cfg.weights, result.report);
  const GradientMap grads = tape.backward(loss);
  const auto clipped = collect_gradients(grads, enc, cfg.grad_clip_norm, result.received_gradient);
  adam_update(params, clipped, opt, hyper_of(cfg));
  return result;
}

StepResult train_step(const GraphStore &graph, EncoderParams &params, OptimizerState &opt,
                      const TrainConfig &cfg, size_t step_index) {
  return train_step(prepare_step(graph, cfg, step_index), params, opt, cfg);
}

StepResult baseline_train_step(const GraphStore &graph, EncoderParams &params, OptimizerState &opt,
                               const TrainConfig &cfg, size_t step_index) {
  StepResult result;
  const RetrievalBatch batch = sample_retrieval_batch(
      graph, cfg.batch_size, cfg.sampling.num_negatives, cfg.sampling.k, cfg.sampling.fanout,
      derive_seed(step_seed(cfg, step_index), kSeedBatch));
  if (batch.batch_size() == 0) {
    result.skipped = true;
    return result;
  }
  Tape tape;
  const BoundEncoder enc = bind(tape, params, true);
  const Tensor z = encode(enc, MessageGraph::from(batch.subgraph),
                          tape.constant(batch.subgraph.local_features));
  const Tensor raw = retrieval_loss(
      retrieval_logits(z, batch.subgraph.query_locals, batch.candidate_locals, batch.num_candidates),
      batch.labels);
  const Tensor loss = op::scale(raw, cfg.weights.alpha);
  result.report.retrieval = raw.item();
  result.report.weighted_retrieval = loss.item();
  result.report.combined = loss.item();
  if (!std::isfinite(result.report.combined)) throw NumericError("retrieval loss is not finite");
  const GradientMap grads = tape.backward(loss);
  const auto clipped = collect_gradients(grads, enc, cfg.grad_clip_norm, result.received_gradient);
  adam_update(params, clipped, opt, hyper_of(cfg));
  return result;
}

TrainState initial_state(const TrainConfig &cfg) {
  TrainState s;
  s.params = init_params(cfg.encoder, derive_seed(cfg.seed, UINT64_MAX));
  s.optimizer = OptimizerState::zeros_like(s.params);
  return s;
}

TrainedModel train(const GraphStore &graph, const TrainConfig &cfg, TrainState start,
                   const TrainHooks &hooks) {
  cfg.validate();
  if (cfg.encoder.layer_dims.front() != graph.feature_dim()) {
    throw ValidationError("encoder input dim " + std::to_string(cfg.encoder.layer_dims.front()) +
                          " != graph feature dim " + std::to_string(graph.feature_dim()));
  }
  start.params.validate();
  TrainedModel model{cfg, std::move(start), {}, 0};
  TrainState &state = model.state;
  if (hooks.checkpoint_dir) std::filesystem::create_directories(*hooks.checkpoint_dir);

  std::future<StepInputs> pending;
  auto launch = [&](size_t step) {
    if (step >= cfg.steps) return;
    if (cfg.prefetch) {
      pending = std::async(std::launch::async, [&graph, &cfg, step] { return prepare_step(graph, cfg, step); });
    }
  };
  launch(state.next_step);
  for (size_t step = state.next_step; step < cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    StepInputs inputs = cfg.prefetch ? pending.get() : prepare_step(graph, cfg, step);
    launch(step + 1);
    StepResult r = train_step(inputs, state.params, state.optimizer, cfg);
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (r.skipped) ++model.skipped_steps;
    state.next_step = step + 1;
    model.history.push_back(r.report);
    if (hooks.on_step) hooks.on_step(step, r.report, wall_ms);
    if (hooks.checkpoint_dir && cfg.checkpoint_every > 0 && state.next_step % cfg.checkpoint_every == 0) {
      write_checkpoint_or_abort(*hooks.checkpoint_dir / ("ckpt-" + std::to_string(state.next_step) + ".json"),
                                cfg, state);
    }
  }
  if (hooks.checkpoint_dir) write_checkpoint_or_abort(*hooks.checkpoint_dir / "model.json", cfg, state);
  return model;
}

TrainedModel train(const GraphStore &graph, const TrainConfig &cfg, const TrainHooks &hooks) {
  cfg.validate();
  return train(graph, cfg, initial_state(cfg), hooks);
}

std::string metrics_line(size_t step, const LossReport &report, double wall_ms) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["retrieval"] = report.retrieval;
  j["cca"] = report.cca;
  j["mae"] = report.mae;
  j["combined"] = report.combined;
  if (wall_ms >= 0.0) j["wall_ms"] = wall_ms;
  return j.dump();
}

}  // namespace ssmtl
