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

#include <chrono>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ssmtl/checkpoint.hpp"
#include "ssmtl/config_io.hpp"
#include "ssmtl/embedding.hpp"
#include "ssmtl/errors.hpp"
#include "ssmtl/synthetic.hpp"
#include "ssmtl/trainer.hpp"
#include "test_util.hpp"

using namespace ssmtl;
using namespace ssmtl::testing;

namespace {

TrainConfig small_config(size_t feature_dim, size_t steps = 10) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = 4;
  cfg.sampling = {2, 3, 3};
  cfg.encoder.layer_dims = {feature_dim, 8, 6};
  cfg.encoder.cca_hidden_dim = 5;
  cfg.encoder.cca_projection_dim = 4;
  cfg.encoder.mae_hidden_dim = 5;
  cfg.seed = 17;
  cfg.learning_rate = 1e-2;
  return cfg;
}

GraphStore small_graph() { return random_graph(8, 60, 0.08, 5); }

}  // namespace

TEST_CASE("adam_update: hand-evaluated steps") {
  Matrix theta(1, 1, 0.0);
  Matrix *params[] = {&theta};
  OptimizerState opt{{Matrix(1, 1)}, {Matrix(1, 1)}, 0};
  const Matrix g[] = {Matrix(1, 1, 1.0)};
  adam_update(params, g, opt, AdamHyper{0.1, 0.9, 0.999, 1e-8});
  // m_hat = 1, v_hat = 1: theta = -0.1 / (1 + 1e-8).
  CHECK(std::abs(theta(0, 0) - (-0.1 / (1.0 + 1e-8))) < 1e-17);
  CHECK(std::abs(theta(0, 0) + 0.1) < 1e-8);
  CHECK(opt.step == 1);

  Matrix w = Matrix::from_rows({{0.3, -0.2}});
  Matrix *wp[] = {&w};
  OptimizerState o2{{Matrix(1, 2)}, {Matrix(1, 2)}, 0};
  const Matrix zero[] = {Matrix(1, 2)};
  adam_update(wp, zero, o2, AdamHyper{});
  CHECK(w == Matrix::from_rows({{0.3, -0.2}}));
  const Matrix empty[] = {Matrix()};
  adam_update(wp, empty, o2, AdamHyper{});
  CHECK(w == Matrix::from_rows({{0.3, -0.2}}));

  Matrix a(1, 3, 1.0), b(1, 3, 1.0);
  Matrix *pa[] = {&a};
  Matrix *pb[] = {&b};
  OptimizerState oa{{Matrix(1, 3)}, {Matrix(1, 3)}, 0}, ob = oa;
  Rng rng(3);
  for (int s = 0; s < 20; ++s) {
    const Matrix gs[] = {random_matrix(rng, 1, 3)};
    adam_update(pa, gs, oa, AdamHyper{});
    adam_update(pb, gs, ob, AdamHyper{});
  }
  CHECK(a == b);
  CHECK(oa == ob);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.enabled_tasks = {false, false, false};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.weights.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.enabled_tasks = {false, true, false};
  CHECK_NOTHROW(cfg.validate());
  cfg = TrainConfig{};
  cfg.augmentation.edge_drop_prob = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("TrainConfig JSON round trip") {
  TrainConfig cfg = small_config(5);
  cfg.sampling.fanout = kUnlimitedFanout;
  cfg.enabled_tasks = {true, false, true};
  cfg.weights.gamma = 0.25;
  const nlohmann::json j = cfg;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(back.sampling.fanout == kUnlimitedFanout);
  CHECK(back.enabled_tasks == TaskSet{true, false, true});
  nlohmann::json bad = j;
  bad["lerning_rate"] = 0.1;
  CHECK_THROWS_AS(bad.get<TrainConfig>(), ValidationError);
}

TEST_CASE("train_step: every parameter receives a gradient with all tasks") {
  const auto g = small_graph();
  const TrainConfig cfg = small_config(5);
  TrainState s = initial_state(cfg);
  const StepResult r = train_step(g, s.params, s.optimizer, cfg, 0);
  REQUIRE_FALSE(r.skipped);
  REQUIRE(r.received_gradient.size() == s.params.named_tensors().size());
  for (size_t i = 0; i < r.received_gradient.size(); ++i) {
    INFO(s.params.named_tensors()[i].first);
    CHECK(r.received_gradient[i]);
  }
  CHECK(std::abs(r.report.combined - (r.report.weighted_retrieval + r.report.weighted_cca + r.report.weighted_mae)) <
        1e-12);
}

TEST_CASE("train: deterministic, prefetch-independent, byte-identical metrics") {
  const auto g = small_graph();
  TrainConfig cfg = small_config(5, 15);
  auto lines = [&](bool prefetch) {
    cfg.prefetch = prefetch;
    std::string out;
    TrainHooks hooks;
    hooks.on_step = [&out](size_t step, const LossReport &r, double) { out += metrics_line(step, r, -1.0) + "\n"; };
    const auto model = train(g, cfg, hooks);
    return std::make_pair(out, model.state);
  };
  const auto a = lines(true);
  const auto b = lines(true);
  const auto c = lines(false);
  CHECK(a.first == b.first);
  CHECK(a.first == c.first);
  CHECK(a.second == b.second);
  CHECK(a.second == c.second);
  CHECK(a.first.find("wall_ms") == std::string::npos);
  CHECK(metrics_line(3, LossReport{}, 1.5).find("\"wall_ms\":1.5") != std::string::npos);
}

TEST_CASE("train: resume from a checkpoint continues identically") {
  TempDir dir;
  const auto g = small_graph();
  TrainConfig cfg = small_config(5, 12);
  cfg.checkpoint_every = 5;
  TrainHooks hooks;
  hooks.checkpoint_dir = dir.path();
  const auto full = train(g, cfg, hooks);
  CHECK(std::filesystem::exists(dir / "ckpt-5.json"));
  CHECK(std::filesystem::exists(dir / "ckpt-10.json"));
  CHECK(std::filesystem::exists(dir / "model.json"));

  Checkpoint ck = load_checkpoint(dir / "ckpt-5.json");
  CHECK(ck.state.next_step == 5);
  const auto resumed = train(g, cfg, std::move(ck.state));
  REQUIRE(resumed.history.size() == 7);
  for (size_t i = 0; i < 7; ++i) CHECK(resumed.history[i] == full.history[5 + i]);
  CHECK(resumed.state == full.state);
}

TEST_CASE("checkpoint round trip and validation") {
  TempDir dir;
  const auto g = small_graph();
  const TrainConfig cfg = small_config(5, 3);
  const auto model = train(g, cfg);
  save_checkpoint(dir / "m.json", cfg, model.state);
  const Checkpoint back = load_checkpoint(dir / "m.json");
  CHECK(back.state == model.state);
  CHECK(nlohmann::json(back.config) == nlohmann::json(cfg));
  CHECK(export_embeddings(back.state.params, g, 2, 3) == export_embeddings(model.state.params, g, 2, 3));

  auto doc = nlohmann::json::parse(read_text(dir / "m.json"));
  doc["version"] = 99;
  write_text(dir / "bad.json", doc.dump());
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), ValidationError);
  doc = nlohmann::json::parse(read_text(dir / "m.json"));
  doc["tensors"][0]["name"] = "mystery";
  write_text(dir / "bad2.json", doc.dump());
  CHECK_THROWS_AS(load_checkpoint(dir / "bad2.json"), ValidationError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), Error);
}

TEST_CASE("train: checkpoint write failure aborts with a partial-state message") {
  TempDir dir;
  write_text(dir / "blocker", "file, not a directory");
  TrainConfig cfg = small_config(5, 2);
  TrainHooks hooks;
  hooks.checkpoint_dir = dir / "blocker" / "sub";
  CHECK_THROWS(train(small_graph(), cfg, hooks));
  std::filesystem::create_directories(dir / "ro");
  hooks.checkpoint_dir = dir / "ro";
  std::filesystem::create_directories(dir / "ro" / "model.json.tmp");
  try {
    train(small_graph(), cfg, hooks);
    FAIL("expected an io error");
  } catch (const IoError &e) {
    CHECK(std::string(e.what()).find("partial state") != std::string::npos);
  }
}

TEST_CASE("ablation identity over short horizons") {
  const auto g = small_graph();
  TrainConfig cfg = small_config(5);
  cfg.enabled_tasks = TaskSet::retrieval_only();
  TrainState a = initial_state(cfg), b = initial_state(cfg);
  for (size_t s = 0; s < 20; ++s) {
    const auto ra = train_step(g, a.params, a.optimizer, cfg, s);
    const auto rb = baseline_train_step(g, b.params, b.optimizer, cfg, s);
    CHECK(ra.report == rb.report);
  }
  CHECK(a == b);
}

TEST_CASE("train: empty batches are skipped and counted") {
  const auto g = GraphStore::build(Matrix(10, 5, 1.0), std::span<const Edge>{});
  TrainConfig cfg = small_config(5, 3);
  cfg.enabled_tasks = TaskSet::retrieval_only();
  const auto model = train(g, cfg);
  CHECK(model.skipped_steps == 3);
  CHECK(model.state.params == initial_state(cfg).params);
}

TEST_CASE("train: input dim mismatch is rejected") {
  CHECK_THROWS_AS(train(small_graph(), small_config(7, 2)), ValidationError);
}

TEST_CASE("train: default config stays finite on three seeds") {
  SyntheticGraphConfig gc;
  gc.num_nodes = 150;
  gc.p_in = 0.08;
  gc.p_out = 0.01;
  const auto g = generate_synthetic_graph(gc).graph;
  for (uint64_t seed : {1, 2, 3}) {
    TrainConfig cfg;
    cfg.steps = 15;
    cfg.seed = seed;
    const auto model = train(g, cfg);
    for (const auto &r : model.history) {
      CHECK(std::isfinite(r.combined));
      CHECK(std::isfinite(r.retrieval));
      CHECK(std::isfinite(r.cca));
      CHECK(std::isfinite(r.mae));
    }
  }
}

TEST_CASE("train: retrieval-only smoke run lowers the retrieval loss") {
  SyntheticGraphConfig gc;
  gc.num_nodes = 500;
  gc.p_in = 0.04;
  gc.p_out = 0.002;
  gc.seed = 2;
  const auto g = generate_synthetic_graph(gc).graph;
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.enabled_tasks = TaskSet::retrieval_only();
  cfg.seed = 5;
  const auto model = train(g, cfg);
  auto window_mean = [&](size_t from) {
    double s = 0.0;
    for (size_t i = from; i < from + 20; ++i) s += model.history[i].retrieval / 20.0;
    return s;
  };
  MESSAGE("first 20 mean " << window_mean(0) << ", last 20 mean " << window_mean(180));
  CHECK(window_mean(180) < window_mean(0));
}

TEST_CASE("train: default multitask config, n=1000, 500 steps inside five minutes") {
  SyntheticGraphConfig gc;
  gc.num_nodes = 1000;
  gc.seed = 1;
  const auto g = generate_synthetic_graph(gc).graph;
  TrainConfig cfg;
  cfg.steps = 500;
  cfg.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = train(g, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("500 steps took " << secs << " s");
  CHECK(model.history.size() == 500);
  CHECK(secs < 300.0);
}
