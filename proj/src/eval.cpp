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

#include "ssmtl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "ssmtl/config_io.hpp"
#include "ssmtl/errors.hpp"
#include "ssmtl/random.hpp"

namespace ssmtl {

using nlohmann::json;

// ---------------------------------------------------------------------------

EdgeSplit split_edges(const GraphStore &graph, double holdout_fraction, uint64_t rng_seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 0.5)) {
    throw ValidationError("holdout fraction must lie in (0, 0.5), got " + std::to_string(holdout_fraction));
  }
  std::vector<Edge> edges = graph.edges();
  if (edges.empty()) throw ValidationError("cannot hold out edges from an edgeless graph");
  // The epsilon keeps exact products such as 0.1 * 10000 from flooring down.
  const auto count = std::max<size_t>(
      1, static_cast<size_t>(std::floor(holdout_fraction * static_cast<double>(edges.size()) + 1e-9)));
  Rng rng(rng_seed);
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  for (size_t i = 0; i < count; ++i) {
    const size_t j = i + rng.below(edges.size() - i);
    std::swap(edges[i], edges[j]);
  }
  EdgeSplit split;
  split.heldout.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(count));
  for (auto &e : split.heldout) {
    if (rng.bernoulli(0.5)) std::swap(e.u, e.v);
  }
  std::vector<Edge> kept(edges.begin() + static_cast<std::ptrdiff_t>(count), edges.end());
  split.train = GraphStore::build(graph.features(), kept);
  return split;
}

// ---------------------------------------------------------------------------

void EvalSettings::validate() const {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 0.5)) {
    throw ValidationError("eval.holdout_fraction must lie in (0, 0.5)");
  }
  if (k_list.empty()) throw ValidationError("eval.k_list must not be empty");
  for (size_t k : k_list) {
    if (k == 0) throw ValidationError("eval.k_list entries must be >= 1");
  }
}

namespace {

std::string hex64(uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

json cohort_json(const CohortMetrics &c) {
  json recall = json::object();
  for (const auto &[k, v] : c.recall) recall[std::to_string(k)] = v;
  return json{{"num_queries", c.num_queries}, {"recall", recall}, {"mrr", c.mrr}};
}

CohortMetrics cohort_from(const json &j, const char *name) {
  try {
    CohortMetrics c;
    c.num_queries = j.at("num_queries").get<size_t>();
    c.mrr = j.at("mrr").get<double>();
    for (const auto &[k, v] : j.at("recall").items()) c.recall[std::stoul(k)] = v.get<double>();
    return c;
  } catch (const std::exception &) {
    throw ValidationError(std::string("eval report: malformed cohort '") + name + "'");
  }
}

struct Accumulator {
  CohortMetrics metrics;
  double rr_sum = 0.0;
  std::map<size_t, size_t> hits;

  void add(size_t rank, std::span<const size_t> ks) {
    ++metrics.num_queries;
    if (rank <= kMrrRankCap) rr_sum += 1.0 / static_cast<double>(rank);
    for (size_t k : ks) hits[k] += rank <= k ? 1 : 0;
  }

  CohortMetrics finish(std::span<const size_t> ks) {
    const double n = static_cast<double>(metrics.num_queries);
    for (size_t k : ks) metrics.recall[k] = metrics.num_queries ? static_cast<double>(hits[k]) / n : 0.0;
    metrics.mrr = metrics.num_queries ? rr_sum / n : 0.0;
    return metrics;
  }
};

// 1-based position of `target` in the ranked list for `query`.
size_t rank_of(const EmbeddingTable &table, const GraphStore &train_graph, NodeId query, NodeId target) {
  const auto q = table.row(query);
  const ScoredId t{target, dot(table.row(target), q)};
  const auto friends = train_graph.neighbors(query);
  size_t rank = 1;
  for (NodeId w = 0; w < table.num_nodes(); ++w) {
    if (w == query || w == target) continue;
    if (ranks_before({w, dot(table.row(w), q)}, t) &&
        !std::binary_search(friends.begin(), friends.end(), w)) {
      ++rank;
    }
  }
  return rank;
}

}  // namespace

std::string eval_fingerprint(const GraphStore &full_graph, const EvalSettings &settings) {
  std::ostringstream s;
  s << "graph=" << hex64(full_graph.fingerprint()) << ";holdout=" << json(settings.holdout_fraction).dump()
    << ";k=";
  for (size_t k : settings.k_list) s << k << ',';
  s << ";cold=" << settings.cold_start_degree << ";seed=" << settings.seed;
  return hex64(fnv1a(s.str()));
}

json to_json(const EvalReport &r) {
  const json all = cohort_json(r.all);
  return json{{"version", r.version},
              {"config_fingerprint", r.config_fingerprint},
              {"num_queries", r.all.num_queries},
              {"recall", all.at("recall")},
              {"mrr", r.all.mrr},
              {"cohorts", {{"all", all}, {"cold_start", cohort_json(r.cold_start)}}}};
}

EvalReport eval_report_from_json(const json &j) {
  if (!j.is_object() || !j.contains("version")) throw ValidationError("eval report: missing version");
  if (!j.at("version").is_number_integer() || j.at("version").get<int>() != kEvalReportVersion) {
    throw ValidationError("eval report: unsupported version " + j.at("version").dump());
  }
  for (const char *key : {"config_fingerprint", "num_queries", "recall", "mrr", "cohorts"}) {
    if (!j.contains(key)) throw ValidationError(std::string("eval report: missing field '") + key + "'");
  }
  EvalReport r;
  r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  const json &cohorts = j.at("cohorts");
  if (!cohorts.contains("all") || !cohorts.contains("cold_start")) {
    throw ValidationError("eval report: cohorts must contain 'all' and 'cold_start'");
  }
  r.all = cohort_from(cohorts.at("all"), "all");
  r.cold_start = cohort_from(cohorts.at("cold_start"), "cold_start");
  return r;
}

EvalReport load_eval_report(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return eval_report_from_json(j);
}

EvalReport evaluate_embeddings(const EmbeddingTable &table, const GraphStore &train_graph,
                               const std::vector<Edge> &heldout, const EvalSettings &settings,
                               std::string fingerprint, size_t num_threads) {
  settings.validate();
  if (table.num_nodes() != train_graph.num_nodes()) {
    throw ValidationError("embedding table has " + std::to_string(table.num_nodes()) + " rows, graph has " +
                          std::to_string(train_graph.num_nodes()) + " nodes");
  }
  for (const auto &e : heldout) {
    if (e.u >= table.num_nodes() || e.v >= table.num_nodes()) throw ValidationError("held-out edge out of range");
    if (train_graph.has_edge(e.u, e.v)) throw ValidationError("held-out edge is present in the training graph");
  }
  std::vector<size_t> ranks(heldout.size());
  const size_t workers = std::max<size_t>(1, std::min(num_threads, heldout.size()));
  auto work = [&](size_t w) {
    for (size_t i = w; i < heldout.size(); i += workers) {
      ranks[i] = rank_of(table, train_graph, heldout[i].u, heldout[i].v);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }

  std::vector<size_t> ks = settings.k_list;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  Accumulator all, cold;
  for (size_t i = 0; i < heldout.size(); ++i) {
    all.add(ranks[i], ks);
    if (train_graph.degree(heldout[i].u) <= settings.cold_start_degree) cold.add(ranks[i], ks);
  }
  EvalReport report;
  report.config_fingerprint = std::move(fingerprint);
  report.all = all.finish(ks);
  report.cold_start = cold.finish(ks);
  return report;
}

EvalReport evaluate(const TrainedModel &model, const GraphStore &train_graph,
                    const std::vector<Edge> &heldout, const EvalSettings &settings,
                    std::string fingerprint, size_t num_threads) {
  const auto table = export_embeddings(model.state.params, train_graph, model.config.sampling.k,
                                       model.config.sampling.fanout, num_threads);
  return evaluate_embeddings(table, train_graph, heldout, settings, std::move(fingerprint), num_threads);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<MetricDelta> cohort_deltas(const CohortMetrics &b, const CohortMetrics &s, double margin,
                                       const char *cohort) {
  if (b.recall.size() != s.recall.size() ||
      !std::equal(b.recall.begin(), b.recall.end(), s.recall.begin(),
                  [](const auto &x, const auto &y) { return x.first == y.first; })) {
    throw ValidationError(std::string("compare: recall cutoffs differ in cohort ") + cohort);
  }
  std::vector<MetricDelta> out;
  auto push = [&](std::string name, double base, double ours) {
    MetricDelta d{std::move(name), base, ours, std::nullopt, false};
    if (base > 0.0) {
      d.relative = (ours - base) / base;
      d.regressed = *d.relative < -margin;
    }
    out.push_back(std::move(d));
  };
  for (const auto &[k, v] : b.recall) push("recall@" + std::to_string(k), v, s.recall.at(k));
  push("mrr", b.mrr, s.mrr);
  return out;
}

json deltas_json(const std::vector<MetricDelta> &ds) {
  json out = json::object();
  for (const auto &d : ds) {
    out[d.metric] = json{{"baseline", d.baseline},
                         {"ssmtl", d.ssmtl},
                         {"relative_delta", d.relative ? json(*d.relative) : json(nullptr)},
                         {"regressed", d.regressed}};
  }
  return out;
}

}  // namespace

DeltaReport compare_runs(const EvalReport &baseline, const EvalReport &ssmtl, double margin) {
  if (!(margin >= 0.0)) throw ValidationError("negative-transfer margin must be >= 0");
  if (baseline.config_fingerprint != ssmtl.config_fingerprint) {
    throw ValidationError("compare: config fingerprints differ (" + baseline.config_fingerprint + " vs " +
                          ssmtl.config_fingerprint + ")");
  }
  if (baseline.all.num_queries != ssmtl.all.num_queries ||
      baseline.cold_start.num_queries != ssmtl.cold_start.num_queries) {
    throw ValidationError("compare: query counts differ");
  }
  DeltaReport r;
  r.margin = margin;
  r.all = cohort_deltas(baseline.all, ssmtl.all, margin, "all");
  r.cold_start = cohort_deltas(baseline.cold_start, ssmtl.cold_start, margin, "cold_start");
  auto any = [](const std::vector<MetricDelta> &ds) {
    return std::any_of(ds.begin(), ds.end(), [](const auto &d) { return d.regressed; });
  };
  r.negative_transfer = any(r.all) || any(r.cold_start);
  return r;
}

json to_json(const DeltaReport &r) {
  return json{{"margin", r.margin},
              {"negative_transfer", r.negative_transfer},
              {"cohorts", {{"all", deltas_json(r.all)}, {"cold_start", deltas_json(r.cold_start)}}}};
}

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  train.validate();
  eval.validate();
  if (num_threads == 0) throw ValidationError("num_threads must be >= 1");
  if (const auto *files = std::get_if<GraphFiles>(&graph)) {
    for (const auto &p : {files->edges, files->features}) {
      if (!std::filesystem::exists(p)) throw ValidationError("graph file does not exist: " + p.string());
    }
  } else {
    std::get<SyntheticGraphConfig>(graph).validate();
  }
}

RunConfig run_config_from_json(const json &j, const std::filesystem::path &base_dir) {
  if (!j.is_object()) throw ValidationError("run config must be a JSON object");
  RunConfig cfg;
  json train = j;
  for (const char *key : {"graph", "eval", "output_dir", "num_threads"}) train.erase(key);
  from_json(train, cfg.train);
  auto resolve = [&](const std::string &p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  if (!j.contains("graph")) throw ValidationError("run config: missing 'graph'");
  const json &g = j.at("graph");
  if (g.contains("synthetic")) {
    reject_unknown_keys(g, {"synthetic"}, "graph");
    SyntheticGraphConfig s;
    from_json(g.at("synthetic"), s);
    cfg.graph = s;
  } else {
    reject_unknown_keys(g, {"edges", "features"}, "graph");
    if (!g.contains("edges") || !g.contains("features") || !g.at("edges").is_string() ||
        !g.at("features").is_string()) {
      throw ValidationError("graph needs 'edges' and 'features' paths or a 'synthetic' block");
    }
    cfg.graph = GraphFiles{resolve(g.at("edges").get<std::string>()), resolve(g.at("features").get<std::string>())};
  }
  if (auto it = j.find("eval"); it != j.end()) {
    reject_unknown_keys(*it, {"holdout_fraction", "k_list", "cold_start_degree", "seed"}, "eval");
    try {
      if (it->contains("holdout_fraction")) cfg.eval.holdout_fraction = it->at("holdout_fraction").get<double>();
      if (it->contains("k_list")) cfg.eval.k_list = it->at("k_list").get<std::vector<size_t>>();
      if (it->contains("cold_start_degree")) cfg.eval.cold_start_degree = it->at("cold_start_degree").get<size_t>();
      if (it->contains("seed")) cfg.eval.seed = it->at("seed").get<uint64_t>();
    } catch (const json::exception &) {
      throw ValidationError("eval settings have the wrong type");
    }
  }
  try {
    if (j.contains("output_dir")) cfg.output_dir = resolve(j.at("output_dir").get<std::string>());
    if (j.contains("num_threads")) cfg.num_threads = j.at("num_threads").get<size_t>();
  } catch (const json::exception &) {
    throw ValidationError("output_dir must be a string and num_threads an integer");
  }
  cfg.validate();
  return cfg;
}

json to_json(const RunConfig &cfg) {
  json j = cfg.train;
  if (const auto *files = std::get_if<GraphFiles>(&cfg.graph)) {
    j["graph"] = json{{"edges", files->edges.string()}, {"features", files->features.string()}};
  } else {
    j["graph"] = json{{"synthetic", std::get<SyntheticGraphConfig>(cfg.graph)}};
  }
  j["eval"] = json{{"holdout_fraction", cfg.eval.holdout_fraction},
                   {"k_list", cfg.eval.k_list},
                   {"cold_start_degree", cfg.eval.cold_start_degree},
                   {"seed", cfg.eval.seed}};
  if (!cfg.output_dir.empty()) j["output_dir"] = cfg.output_dir.string();
  j["num_threads"] = cfg.num_threads;
  return j;
}

RunConfig load_run_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

PreparedData prepare_data(const RunConfig &cfg) {
  PreparedData data;
  if (const auto *files = std::get_if<GraphFiles>(&cfg.graph)) {
    data.full = load_graph(files->edges, files->features);
  } else {
    data.full = generate_synthetic_graph(std::get<SyntheticGraphConfig>(cfg.graph)).graph;
  }
  data.split = split_edges(data.full, cfg.eval.holdout_fraction, cfg.eval.seed);
  data.fingerprint = eval_fingerprint(data.full, cfg.eval);
  return data;
}

void write_file_atomic(const std::filesystem::path &path, const std::string &text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

RunResult run_experiment(const RunConfig &cfg, std::optional<TrainState> resume) {
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  TrainHooks hooks;
  std::ofstream metrics;
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    hooks.checkpoint_dir = cfg.output_dir;
    const auto mode = resume ? std::ios::app : std::ios::trunc;
    metrics.open(cfg.output_dir / "metrics.jsonl", std::ios::out | mode);
    if (!metrics) throw IoError("cannot write " + (cfg.output_dir / "metrics.jsonl").string());
    hooks.on_step = [&metrics](size_t step, const LossReport &report, double wall_ms) {
      metrics << metrics_line(step, report, wall_ms) << '\n';
    };
  }
  RunResult result;
  result.model = resume ? train(data.split.train, cfg.train, std::move(*resume), hooks)
                        : train(data.split.train, cfg.train, hooks);
  result.report =
      evaluate(result.model, data.split.train, data.split.heldout, cfg.eval, data.fingerprint, cfg.num_threads);
  if (!cfg.output_dir.empty()) {
    metrics.flush();
    write_file_atomic(cfg.output_dir / "eval.json", to_json(result.report).dump(2) + "\n");
  }
  return result;
}

}  // namespace ssmtl
