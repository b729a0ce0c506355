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

// Acceptance run. Prints exactly one "PASS <n> ..." or "FAIL <n> ..." line per
// criterion on stdout; diagnostics go to stderr. Optional arguments pick a
// subset of criteria by number (criterion 9 then only times that subset).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "ssmtl/ann_index.hpp"
#include "ssmtl/checkpoint.hpp"
#include "ssmtl/embedding.hpp"
#include "ssmtl/encoder.hpp"
#include "ssmtl/eval.hpp"
#include "ssmtl/gradcheck.hpp"
#include "ssmtl/objectives.hpp"
#include "ssmtl/runtime.hpp"
#include "ssmtl/synthetic.hpp"
#include "ssmtl/trainer.hpp"
#include "test_util.hpp"

using namespace ssmtl;
using namespace ssmtl::testing;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSeconds = 60.0;
constexpr double kRetrievalIdentityTol = 1e-9;
constexpr double kCcaMaeIdentityTol = 1e-12;
constexpr double kDecorrelationReduction = 0.5;
// The decorrelation term grows with the square of the projection width while
// the invariance term grows linearly, so at width 32 the default lambda leaves
// it nearly inert. This criterion is asserted at 0.1; the default-lambda
// trajectory is reported alongside.
constexpr double kDecorrelationLambda = 0.1;
constexpr double kOracleTol = 1e-10;
constexpr double kAnnRecallFloor = 0.95;
constexpr double kSuiteBudgetSeconds = 600.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Reduced-cost training setup used by the experiment: one laptop core has to
// finish six 1000-step runs inside the suite budget.
TrainConfig experiment_train_config(uint64_t seed) {
  TrainConfig t;
  t.steps = 1000;
  t.batch_size = 16;
  t.sampling.k = 2;
  t.sampling.num_negatives = 7;
  t.sampling.fanout = 5;
  t.encoder.layer_dims = {16, 32, 32};
  t.encoder.cca_hidden_dim = 32;
  t.encoder.cca_projection_dim = 32;
  t.encoder.mae_hidden_dim = 32;
  t.prefetch = false;
  t.seed = seed;
  return t;
}

SyntheticGraphConfig experiment_graph() {
  SyntheticGraphConfig g;
  g.num_nodes = 2000;
  g.num_communities = 2;
  g.p_in = 0.02;
  g.p_out = 0.002;
  g.cold_start_fraction = 0.1;
  g.feature_dim = 16;
  g.seed = 0;
  return g;
}

EvalReport mean_report(const std::vector<EvalReport> &rs) {
  EvalReport m = rs.front();
  auto avg = [&](auto member) {
    CohortMetrics &out = m.*member;
    for (auto &[k, v] : out.recall) {
      v = 0.0;
      for (const auto &r : rs) v += (r.*member).recall.at(k);
      v /= static_cast<double>(rs.size());
    }
    out.mrr = 0.0;
    for (const auto &r : rs) out.mrr += (r.*member).mrr;
    out.mrr /= static_cast<double>(rs.size());
  };
  avg(&EvalReport::all);
  avg(&EvalReport::cold_start);
  return m;
}

const MetricDelta &metric(const std::vector<MetricDelta> &v, const std::string &name) {
  for (const auto &d : v)
    if (d.metric == name) return d;
  throw std::runtime_error("missing metric " + name);
}

Outcome directional_benefit() {
  const std::filesystem::path out_dir = "acceptance-artifacts";
  std::filesystem::create_directories(out_dir);
  std::vector<EvalReport> full, base;
  for (uint64_t seed : {1, 2, 3}) {
    RunConfig cfg;
    cfg.graph = experiment_graph();
    cfg.train = experiment_train_config(seed);
    full.push_back(run_experiment(cfg).report);
    cfg.train.enabled_tasks = TaskSet::retrieval_only();
    base.push_back(run_experiment(cfg).report);
    std::cerr << "  seed " << seed << ": ssmtl recall@10 " << full.back().all.recall.at(10) << " baseline "
              << base.back().all.recall.at(10) << " | cold-start ssmtl " << full.back().cold_start.recall.at(10)
              << " baseline " << base.back().cold_start.recall.at(10) << "\n";
    write_file_atomic(out_dir / ("ssmtl-seed" + std::to_string(seed) + ".json"), to_json(full.back()).dump(2));
    write_file_atomic(out_dir / ("baseline-seed" + std::to_string(seed) + ".json"), to_json(base.back()).dump(2));
  }
  const EvalReport mf = mean_report(full), mb = mean_report(base);
  const DeltaReport delta = compare_runs(mb, mf);
  write_file_atomic(out_dir / "delta.json", to_json(delta).dump(2));
  std::cerr << "  mean delta: " << to_json(delta).dump() << "\n";

  const double rf = mf.all.recall.at(10), rb = mb.all.recall.at(10);
  const double cold = mf.cold_start.recall.at(10) - mb.cold_start.recall.at(10);
  const bool benefit = rf >= rb && cold >= 0.0;
  std::string detail = "mean recall@10 ssmtl " + fmt(rf) + " vs baseline " + fmt(rb) + ", cold-start delta " +
                       fmt(cold) + " over " + std::to_string(mf.cold_start.num_queries) +
                       " cold queries, negative-transfer flag " + (delta.negative_transfer ? "set" : "clear");
  if (benefit) return {true, detail + "; benefit holds"};
  if (delta.negative_transfer) return {true, detail + "; negative-transfer flag fired"};
  const auto &r10 = metric(delta.all, "recall@10");
  return {false, detail + "; inequality failed and no regression beyond margin was flagged (relative " +
                     (r10.relative ? fmt(*r10.relative) : std::string("undefined")) + ")"};
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  size_t cases = 0;
  double worst = 0.0;
  std::string failed;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto report = run_gradcheck(seed, kGradTol);
    for (const auto &c : report.cases) {
      ++cases;
      worst = std::max(worst, c.max_rel_error);
      if (!c.passed && failed.empty()) failed = c.name + " at seed " + std::to_string(seed);
    }
  }
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(cases) + " checks, worst relative error " + fmt(worst) + ", " + fmt(secs) + " s";
  if (!failed.empty()) return {false, detail + "; first failure " + failed};
  return {secs < kGradBudgetSeconds, detail};
}

Outcome loss_identities() {
  double worst_ret = 0.0, worst_other = 0.0;
  for (size_t m : {2, 16, 64}) {
    const std::vector<double> q(4, 0.0);
    Rng rng(m);
    const Matrix cands = random_matrix(rng, m, 4);
    std::vector<double> labels(m, 0.0);
    labels[m / 3] = 1.0;
    worst_ret = std::max(worst_ret, std::abs(retrieval_loss(q, cands, labels) - std::log(static_cast<double>(m))));
  }
  Rng rng(7);
  const Matrix z = random_matrix(rng, 12, 5);
  worst_other = std::max(worst_other, std::abs(cca_loss(z, z, CcaConfig{0.0})));
  const Matrix x = random_matrix(rng, 6, 4);
  Matrix neg = x;
  for (double &v : neg.data) v = -v;
  MaeConfig mc;
  worst_other = std::max(worst_other, std::abs(mae_loss(x, x, mc)));
  worst_other = std::max(worst_other, std::abs(mae_loss(x, neg, mc) - std::pow(2.0, mc.y_exponent)));
  return {worst_ret <= kRetrievalIdentityTol && worst_other <= kCcaMaeIdentityTol,
          "retrieval max error " + fmt(worst_ret) + ", cca/mae max error " + fmt(worst_other)};
}

Outcome ablation_identity() {
  const GraphStore g = generate_synthetic_graph(experiment_graph()).graph;
  TrainConfig cfg = experiment_train_config(42);
  cfg.enabled_tasks = TaskSet::retrieval_only();
  TrainState a = initial_state(cfg), b = initial_state(cfg);
  size_t mismatched_reports = 0;
  for (size_t s = 0; s < 100; ++s) {
    const auto ra = train_step(g, a.params, a.optimizer, cfg, s);
    const auto rb = baseline_train_step(g, b.params, b.optimizer, cfg, s);
    mismatched_reports += !(ra.report == rb.report);
  }
  const bool same = a == b && mismatched_reports == 0;
  return {same, same ? "parameters, optimizer state and losses bitwise equal after 100 steps"
                     : std::to_string(mismatched_reports) + " loss mismatches; final state equal: " +
                           (a == b ? "yes" : "no")};
}

struct PenaltyTrace {
  double before = 0.0;
  double after = 0.0;
  double lowest = 0.0;
};

// Trains only the CCA objective on a fixed subgraph (fresh augmentations per
// step) and tracks the decorrelation penalty of the un-augmented embedding.
PenaltyTrace cca_only_trace(const Subgraph &fixed, double lambda) {
  TrainConfig cfg = experiment_train_config(3);
  cfg.enabled_tasks = {false, true, false};
  cfg.weights = {0.0, 1.0, 0.0};
  cfg.cca.lambda = lambda;
  TrainState st = initial_state(cfg);
  auto penalty = [&] { return decorrelation_penalty(cca_head(st.params, encode(st.params, fixed))); };
  PenaltyTrace t;
  t.before = t.lowest = penalty();
  const auto &aug = cfg.augmentation;
  for (size_t s = 0; s < 200; ++s) {
    StepInputs in;
    in.step = s;
    in.batch.subgraph = fixed;
    in.cca_view_a = augment_feature_drop(augment_edge_drop(fixed, aug.edge_drop_prob, 1000 + 4 * s),
                                         aug.feature_drop_prob, 1001 + 4 * s);
    in.cca_view_b = augment_feature_drop(augment_edge_drop(fixed, aug.edge_drop_prob, 1002 + 4 * s),
                                         aug.feature_drop_prob, 1003 + 4 * s);
    if (train_step(in, st.params, st.optimizer, cfg).skipped) throw std::runtime_error("cca step skipped");
    t.lowest = std::min(t.lowest, penalty());
  }
  t.after = penalty();
  return t;
}

Outcome cca_decorrelation() {
  SyntheticGraphConfig gc = experiment_graph();
  gc.num_nodes = 200;
  gc.p_in = 0.05;
  gc.p_out = 0.005;
  gc.seed = 5;
  const GraphStore g = generate_synthetic_graph(gc).graph;
  std::vector<NodeId> all(g.num_nodes());
  std::iota(all.begin(), all.end(), 0);
  Subgraph fixed = sample_neighborhood(g, all, 1, kUnlimitedFanout, 0);
  fixed.query_locals.assign(all.begin(), all.end());  // every node is a root

  const PenaltyTrace t = cca_only_trace(fixed, kDecorrelationLambda);
  const PenaltyTrace d = cca_only_trace(fixed, CcaConfig{}.lambda);
  const double reduction = 1.0 - t.after / t.before;
  return {reduction >= kDecorrelationReduction,
          "lambda " + fmt(kDecorrelationLambda) + ": penalty " + fmt(t.before) + " -> " + fmt(t.after) +
              " after 200 steps (reduction " + fmt(reduction) + "); default lambda " + fmt(CcaConfig{}.lambda) +
              ": " + fmt(d.before) + " -> " + fmt(d.after)};
}

Outcome oracle_equivalence() {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 500);
    const size_t n = 1 + rng.below(10);
    const auto edges = random_edges(rng, n, 0.4);
    const auto layer = random_layer(rng, 4, 5);
    const Matrix h = random_matrix(rng, n, 4);
    const auto sub = make_subgraph(h, edges);
    for (bool final_layer : {false, true}) {
      const Matrix a = gat_layer_forward(layer, sub, h, final_layer);
      const Matrix b = dense_gat(layer, h, edges, final_layer);
      for (size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
  }
  size_t topk_mismatch = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng g(seed + 900);
    const size_t n = 1 + g.below(80), d = 1 + g.below(6);
    Matrix m(n, d);
    for (double &v : m.data) v = static_cast<double>(g.below(3)) - 1.0;
    const EmbeddingTable t{m};
    Matrix q(1, d);
    for (double &v : q.data) v = static_cast<double>(g.below(3)) - 1.0;
    const size_t k = 1 + g.below(n + 3);
    topk_mismatch += !(exact_topk(t, q.row(0), k).items == naive_topk(t, q.row(0), k));
  }
  return {worst <= kOracleTol && topk_mismatch == 0,
          "GAT max abs diff " + fmt(worst) + " on 20 graphs, exact_topk mismatches " + std::to_string(topk_mismatch) +
              "/100"};
}

Outcome ann_quality() {
  Rng rng(77);
  const EmbeddingTable table{random_matrix(rng, 10000, 32)};
  AnnConfig cfg;
  cfg.m_conn = 16;
  cfg.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const AnnIndex idx = AnnIndex::build(table, cfg);
  const double build_s = seconds_since(t0);
  const std::string audit = idx.audit();
  const Matrix queries = random_matrix(rng, 100, 32);
  std::vector<std::set<NodeId>> truth;
  for (size_t i = 0; i < 100; ++i) {
    std::set<NodeId> s;
    for (const auto &x : exact_topk(table, queries.row(i), 10).items) s.insert(x.id);
    truth.push_back(std::move(s));
  }
  std::string curve;
  double prev = -1.0, at64 = 0.0;
  bool monotone = true;
  for (size_t ef : {16, 32, 64, 128}) {
    size_t hits = 0;
    for (size_t i = 0; i < 100; ++i)
      for (const auto &x : idx.search(queries.row(i), 10, ef)) hits += truth[i].count(x.id);
    const double recall = static_cast<double>(hits) / 1000.0;
    if (recall < prev) monotone = false;
    prev = recall;
    if (ef == 64) at64 = recall;
    curve += (curve.empty() ? "" : ", ") + std::string("ef ") + std::to_string(ef) + ": " + fmt(recall);
  }
  return {at64 >= kAnnRecallFloor && monotone && audit.empty(),
          "recall@10 " + curve + (monotone ? " (monotone)" : " (not monotone)") + ", build " + fmt(build_s) + " s" +
              (audit.empty() ? "" : ", audit: " + audit)};
}

Outcome determinism_and_resume() {
  SyntheticGraphConfig gc = experiment_graph();
  gc.num_nodes = 500;
  gc.p_in = 0.04;
  const GraphStore g = generate_synthetic_graph(gc).graph;
  TrainConfig cfg = experiment_train_config(9);
  cfg.steps = 40;
  cfg.checkpoint_every = 10;
  cfg.prefetch = true;
  TempDir dir;
  auto run = [&](const TrainHooks &base, std::string &log) {
    TrainHooks h = base;
    h.on_step = [&log](size_t step, const LossReport &r, double) { log += metrics_line(step, r, -1.0) + "\n"; };
    return h;
  };
  std::string a, b, c;
  TrainHooks with_ckpt;
  with_ckpt.checkpoint_dir = dir.path();
  const auto m1 = train(g, cfg, run(with_ckpt, a));
  const auto m2 = train(g, cfg, run(TrainHooks{}, b));
  Checkpoint ck = load_checkpoint(dir / "ckpt-20.json");
  const auto m3 = train(g, cfg, std::move(ck.state), run(TrainHooks{}, c));
  const bool bytes_equal = a == b;
  const bool resume_equal = m3.history.size() == 20 &&
                            std::equal(m3.history.begin(), m3.history.end(), m1.history.begin() + 20) &&
                            m3.state == m1.state;
  const bool tail_lines = a.size() >= c.size() && a.compare(a.size() - c.size(), c.size(), c) == 0;
  return {bytes_equal && resume_equal && tail_lines && m1.state == m2.state,
          std::string("metrics byte-identical: ") + (bytes_equal ? "yes" : "no") +
              ", resume from step 20 matches: " + (resume_equal && tail_lines ? "yes" : "no")};
}

}  // namespace

int main(int argc, char **argv) {
  configure_allocator();
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int n) { return wanted.empty() || wanted.count(n) > 0; };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"directional benefit or flagged negative transfer", directional_benefit},
      {"gradient correctness", gradient_correctness},
      {"loss identities", loss_identities},
      {"ablation identity", ablation_identity},
      {"cca decorrelation dynamics", cca_decorrelation},
      {"oracle equivalence", oracle_equivalence},
      {"ann quality", ann_quality},
      {"determinism and resume", determinism_and_resume},
  };
  const auto t0 = std::chrono::steady_clock::now();
  bool all_pass = true;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!want(n)) continue;
    const auto ts = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << n << " " << criteria[i].first << ": " << o.detail << " ["
              << fmt(seconds_since(ts)) << " s]" << std::endl;
  }

  if (want(9)) {
    // The acceptance run above plus the unit suite, timed end to end.
    const auto tu = std::chrono::steady_clock::now();
    const std::string cmd = std::string("\"") + SSMTL_UNIT_TESTS_PATH + "\" > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    const double unit_s = seconds_since(tu);
    const double total = seconds_since(t0);
    const bool ok = rc == 0 && total < kSuiteBudgetSeconds;
    all_pass = all_pass && ok;
    std::cout << (ok ? "PASS " : "FAIL ") << "9 full suite runtime: " << fmt(total) << " s total (unit tests "
              << fmt(unit_s) << " s, exit " << rc << "), budget " << kSuiteBudgetSeconds << " s" << std::endl;
  }
  return all_pass ? 0 : 1;
}
