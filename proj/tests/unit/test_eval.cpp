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

#include <cmath>
#include <set>

#include "doctest.h"
#include "ssmtl/errors.hpp"
#include "ssmtl/eval.hpp"
#include "ssmtl/synthetic.hpp"
#include "test_util.hpp"

using namespace ssmtl;
using namespace ssmtl::testing;

namespace {

std::set<std::pair<NodeId, NodeId>> canonical_set(const std::vector<Edge> &edges) {
  std::set<std::pair<NodeId, NodeId>> s;
  for (const Edge &e : edges) {
    const Edge c = e.canonical();
    s.insert({c.u, c.v});
  }
  return s;
}

GraphStore path_of_edges(size_t num_edges) {
  std::vector<Edge> edges;
  for (NodeId i = 0; i < num_edges; ++i) edges.push_back({i, i + 1});
  return GraphStore::build(Matrix(num_edges + 1, 2, 1.0), edges);
}

EvalReport report_with(double r10, double mrr, const std::string &fp = "abc") {
  EvalReport r;
  r.config_fingerprint = fp;
  r.all.num_queries = 50;
  r.all.recall = {{10, r10}};
  r.all.mrr = mrr;
  r.cold_start.num_queries = 5;
  r.cold_start.recall = {{10, r10}};
  r.cold_start.mrr = mrr;
  return r;
}

const MetricDelta &find(const std::vector<MetricDelta> &v, const std::string &name) {
  for (const auto &d : v)
    if (d.metric == name) return d;
  throw std::runtime_error("metric not found: " + name);
}

}  // namespace

TEST_CASE("split_edges: counts, disjointness, orientation") {
  const auto small = path_of_edges(1000);
  const auto s1 = split_edges(small, 1e-6, 1);
  CHECK(s1.heldout.size() == 1);
  CHECK(s1.train.num_edges() == 999);

  const auto big = path_of_edges(10000);
  const auto s2 = split_edges(big, 0.1, 2);
  CHECK(s2.heldout.size() == 1000);
  CHECK(s2.train.num_edges() == 9000);
  const auto held = canonical_set(s2.heldout);
  CHECK(held.size() == 1000);
  const auto train = canonical_set(s2.train.edges());
  size_t flipped = 0;
  for (const Edge &e : s2.heldout) {
    CHECK_FALSE(s2.train.has_edge(e.u, e.v));
    CHECK(big.has_edge(e.u, e.v));
    flipped += e.u > e.v;
  }
  for (const auto &p : train) CHECK(held.count(p) == 0);
  CHECK(train.size() + held.size() == 10000);
  // Coin-flip orientation: 500 +- 5 sigma.
  CHECK(flipped > 420);
  CHECK(flipped < 580);
  CHECK(s2.train.features() == big.features());

  CHECK(split_edges(big, 0.1, 2).heldout == s2.heldout);
  CHECK_THROWS_AS(split_edges(big, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(split_edges(big, 0.5, 1), ValidationError);
  CHECK_THROWS_AS(split_edges(GraphStore::build(Matrix(3, 1), std::span<const Edge>{}), 0.1, 1), ValidationError);
}

TEST_CASE("evaluate_embeddings: hand-worked rank") {
  // Scores for query 0: node1 5, node2 4, node3 3, node4 2. Node 1 is a
  // training neighbor so it is skipped; target 3 lands at rank 2.
  EmbeddingTable t{Matrix::from_rows({{1}, {5}, {4}, {3}, {2}})};
  const std::vector<Edge> train_edges{{0, 1}};
  const auto g = GraphStore::build(Matrix(5, 1), train_edges);
  EvalSettings s;
  s.k_list = {1, 2, 5};
  const auto r = evaluate_embeddings(t, g, {{0, 3}}, s, "fp");
  CHECK(r.config_fingerprint == "fp");
  CHECK(r.all.num_queries == 1);
  CHECK(r.all.recall.at(1) == 0.0);
  CHECK(r.all.recall.at(2) == 1.0);
  CHECK(r.all.recall.at(5) == 1.0);
  CHECK(r.all.mrr == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.cold_start.num_queries == 1);

  // Held-out edge still present in training is a contract violation.
  CHECK_THROWS(evaluate_embeddings(t, g, {{1, 0}}, s, "fp"));
}

TEST_CASE("evaluate_embeddings: oracle embeddings give perfect retrieval") {
  // Perfect matching; both ends of pair i embed to basis vector e_i.
  const size_t pairs = 40;
  std::vector<Edge> edges;
  for (NodeId i = 0; i < pairs; ++i) edges.push_back({2 * i, 2 * i + 1});
  const auto full = GraphStore::build(Matrix(2 * pairs, 1), edges);
  const auto split = split_edges(full, 0.25, 3);
  Matrix m(2 * pairs, pairs);
  for (NodeId v = 0; v < 2 * pairs; ++v) m(v, v / 2) = 1.0;
  const auto r = evaluate_embeddings(EmbeddingTable{m}, split.train, split.heldout, EvalSettings{}, "x");
  CHECK(r.all.num_queries == 10);
  for (const auto &[k, v] : r.all.recall) CHECK(v == 1.0);
  CHECK(r.all.mrr == 1.0);
  CHECK(r.cold_start.num_queries == 10);
}

TEST_CASE("evaluate_embeddings: random embeddings sit at chance") {
  double hits = 0.0, expected = 0.0, variance = 0.0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const auto full = random_graph(seed, 400, 0.02, 2);
    const auto split = split_edges(full, 0.1, seed);
    Rng rng(seed + 50);
    const EmbeddingTable t{random_matrix(rng, 400, 8)};
    EvalSettings s;
    s.k_list = {10};
    const auto r = evaluate_embeddings(t, split.train, split.heldout, s, "x", 2);
    hits += r.all.recall.at(10) * static_cast<double>(r.all.num_queries);
    for (const Edge &e : split.heldout) {
      const double p = 10.0 / static_cast<double>(400 - 1 - split.train.degree(e.u));
      expected += p;
      variance += p * (1.0 - p);
    }
  }
  MESSAGE("hits " << hits << " expected " << expected << " sd " << std::sqrt(variance));
  CHECK(std::abs(hits - expected) <= 3.0 * std::sqrt(variance));
}

TEST_CASE("evaluate_embeddings: recall monotone in k, thread independent") {
  const auto full = random_graph(9, 300, 0.03, 2);
  const auto split = split_edges(full, 0.2, 9);
  Rng rng(10);
  const EmbeddingTable t{random_matrix(rng, 300, 4)};
  EvalSettings s;
  s.k_list = {1, 3, 5, 10, 20, 50};
  const auto r = evaluate_embeddings(t, split.train, split.heldout, s, "x", 1);
  CHECK(r == evaluate_embeddings(t, split.train, split.heldout, s, "x", 4));
  double prev = 0.0;
  for (const auto &[k, v] : r.all.recall) {
    CHECK(v >= prev);
    CHECK(v <= 1.0);
    prev = v;
  }
  CHECK(r.all.mrr >= 0.0);
  CHECK(r.all.mrr <= 1.0);
  CHECK(r.cold_start.num_queries <= r.all.num_queries);
}

TEST_CASE("eval report JSON round trip and version check") {
  EvalReport r = report_with(0.25, 0.125);
  r.all.recall[1] = 0.1;
  r.cold_start.recall[1] = 0.0;
  const auto j = to_json(r);
  CHECK(j.at("version") == kEvalReportVersion);
  CHECK(j.at("num_queries") == 50);
  CHECK(j.at("cohorts").contains("cold_start"));
  CHECK(eval_report_from_json(j) == r);
  auto bad = j;
  bad["version"] = 2;
  CHECK_THROWS_AS(eval_report_from_json(bad), ValidationError);
  bad = j;
  bad.erase("mrr");
  CHECK_THROWS_AS(eval_report_from_json(bad), ValidationError);
}

TEST_CASE("eval_fingerprint tracks graph and settings") {
  const auto g = random_graph(1, 30, 0.1, 2);
  EvalSettings s;
  const auto fp = eval_fingerprint(g, s);
  CHECK(fp == eval_fingerprint(g, s));
  EvalSettings s2 = s;
  s2.seed = 1;
  CHECK(fp != eval_fingerprint(g, s2));
  CHECK(fp != eval_fingerprint(random_graph(2, 30, 0.1, 2), s));
}

TEST_CASE("compare_runs: deltas and regression flags") {
  const auto same = compare_runs(report_with(0.2, 0.1), report_with(0.2, 0.1));
  for (const auto &d : same.all) {
    REQUIRE(d.relative.has_value());
    CHECK(*d.relative == 0.0);
    CHECK_FALSE(d.regressed);
  }
  CHECK_FALSE(same.negative_transfer);

  const auto up = compare_runs(report_with(0.200, 0.1), report_with(0.2109, 0.1));
  CHECK(*find(up.all, "recall@10").relative == doctest::Approx(0.0545).epsilon(1e-9));
  CHECK_FALSE(up.negative_transfer);

  // -0.75% is inside the 1% margin; -5% is not.
  CHECK_FALSE(compare_runs(report_with(0.2, 0.1), report_with(0.1985, 0.1)).negative_transfer);
  const auto down = compare_runs(report_with(0.2, 0.1), report_with(0.19, 0.1));
  CHECK(find(down.all, "recall@10").regressed);
  CHECK(down.negative_transfer);

  // Regression confined to the cold-start cohort still counts.
  EvalReport cold = report_with(0.2, 0.1);
  cold.cold_start.mrr = 0.05;
  const auto c = compare_runs(report_with(0.2, 0.1), cold);
  CHECK_FALSE(find(c.all, "mrr").regressed);
  CHECK(find(c.cold_start, "mrr").regressed);
  CHECK(c.negative_transfer);

  const auto zero = compare_runs(report_with(0.0, 0.0), report_with(0.1, 0.0));
  CHECK_FALSE(find(zero.all, "recall@10").relative.has_value());
  CHECK_FALSE(zero.negative_transfer);

  CHECK_THROWS_AS(compare_runs(report_with(0.2, 0.1, "a"), report_with(0.2, 0.1, "b")), ValidationError);
  EvalReport other = report_with(0.2, 0.1);
  other.all.recall[5] = 0.1;
  CHECK_THROWS_AS(compare_runs(report_with(0.2, 0.1), other), ValidationError);
  const auto j = to_json(down);
  CHECK(j.at("negative_transfer") == true);
}

TEST_CASE("RunConfig parsing") {
  TempDir dir;
  std::filesystem::create_directories(dir / "data");
  write_text(dir / "data" / "e.txt", "0 1\n");
  write_text(dir / "f.txt", "1\n2\n");
  auto j = nlohmann::json::parse(R"({
    "steps": 7, "batch_size": 3,
    "graph": {"edges": "data/e.txt"},
    "eval": {"holdout_fraction": 0.2, "k_list": [1, 4]},
    "output_dir": "out", "num_threads": 2})");
  j["graph"]["features"] = (dir / "f.txt").string();
  const auto cfg = run_config_from_json(j, dir.path());
  CHECK(cfg.train.steps == 7);
  CHECK(cfg.train.batch_size == 3);
  const auto &files = std::get<GraphFiles>(cfg.graph);
  CHECK(files.edges == dir / "data" / "e.txt");
  CHECK(files.features == dir / "f.txt");
  CHECK(cfg.eval.holdout_fraction == 0.2);
  CHECK(cfg.eval.k_list == std::vector<size_t>{1, 4});
  CHECK(cfg.output_dir == dir / "out");
  CHECK(cfg.num_threads == 2);

  const auto back = run_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));

  auto bad = j;
  bad["eval"]["holdout"] = 0.1;
  CHECK_THROWS_AS(run_config_from_json(bad, dir.path()), ValidationError);
  bad = j;
  bad["stepz"] = 1;
  CHECK_THROWS_AS(run_config_from_json(bad, dir.path()), ValidationError);
  bad = j;
  bad.erase("graph");
  CHECK_THROWS_AS(run_config_from_json(bad, dir.path()), ValidationError);
  bad = j;
  bad["eval"]["holdout_fraction"] = 0.7;
  CHECK_THROWS_AS(run_config_from_json(bad, dir.path()), ValidationError);
  bad = j;
  bad["graph"]["edges"] = "missing.txt";
  CHECK_THROWS_AS(run_config_from_json(bad, dir.path()), Error);
}

TEST_CASE("run_experiment: small end-to-end run writes its artifacts") {
  TempDir dir;
  RunConfig cfg;
  SyntheticGraphConfig g;
  g.num_nodes = 120;
  g.p_in = 0.1;
  g.p_out = 0.01;
  g.feature_dim = 6;
  cfg.graph = g;
  cfg.train.steps = 6;
  cfg.train.checkpoint_every = 3;
  cfg.train.batch_size = 4;
  cfg.train.sampling = {2, 3, 3};
  cfg.train.encoder.layer_dims = {6, 8, 8};
  cfg.output_dir = dir.path();
  const auto r = run_experiment(cfg);
  CHECK(r.report.all.num_queries > 0);
  CHECK(r.report.config_fingerprint == prepare_data(cfg).fingerprint);
  for (const char *f : {"metrics.jsonl", "model.json", "ckpt-3.json", "eval.json"})
    CHECK(std::filesystem::exists(dir / f));
  const std::string metrics = read_text(dir / "metrics.jsonl");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 6);
  CHECK(load_eval_report(dir / "eval.json") == r.report);

  // Baseline and multi-task runs share a fingerprint.
  RunConfig base = cfg;
  base.output_dir.clear();
  base.train.enabled_tasks = TaskSet::retrieval_only();
  CHECK(run_experiment(base).report.config_fingerprint == r.report.config_fingerprint);
}
