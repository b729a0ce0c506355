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

#include "ssmtl/cli.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssmtl/ann_index.hpp"
#include "ssmtl/checkpoint.hpp"
#include "ssmtl/config_io.hpp"
#include "ssmtl/errors.hpp"
#include "ssmtl/eval.hpp"
#include "ssmtl/gradcheck.hpp"

namespace ssmtl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string shortest(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

// Checkpoint and run config must agree on everything that shapes the loss
// sequence. The step budget may grow.
void check_resume_compatible(const TrainConfig &run, const TrainConfig &ckpt) {
  json a = run;
  json b = ckpt;
  for (const char *key : {"steps", "prefetch", "checkpoint_every"}) {
    a.erase(key);
    b.erase(key);
  }
  if (a != b) throw ValidationError("checkpoint was written with a different training config");
}

struct SynthArgs {
  std::string config;
  SyntheticGraphConfig graph;
  std::string edges, features;
};

int run_synth(const SynthArgs &a, std::ostream &out) {
  SyntheticGraphConfig cfg = a.graph;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw IoError("cannot open " + a.config);
    json j;
    try {
      in >> j;
    } catch (const json::exception &e) {
      throw ParseError(a.config + ": " + e.what());
    }
    from_json(j, cfg);
  }
  const SyntheticGraph g = generate_synthetic_graph(cfg);
  save_graph(g.graph, a.edges, a.features);
  out << json{{"num_nodes", g.graph.num_nodes()},
              {"num_edges", g.graph.num_edges()},
              {"cold_start_nodes", g.cold_start.size()}}
             .dump()
      << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string config, resume, output_dir;
};

int run_train(const TrainArgs &a, std::ostream &out) {
  RunConfig cfg = load_run_config(a.config);
  if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
  const PreparedData data = prepare_data(cfg);
  std::optional<TrainState> start;
  if (!a.resume.empty()) {
    Checkpoint ckpt = load_checkpoint(a.resume);
    check_resume_compatible(cfg.train, ckpt.config);
    start = std::move(ckpt.state);
  }
  TrainHooks hooks;
  std::ofstream metrics;
  std::ostream *sink = &out;
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    hooks.checkpoint_dir = cfg.output_dir;
    metrics.open(cfg.output_dir / "metrics.jsonl", start ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + (cfg.output_dir / "metrics.jsonl").string());
    sink = &metrics;
  }
  hooks.on_step = [sink](size_t step, const LossReport &r, double wall_ms) {
    *sink << metrics_line(step, r, wall_ms) << '\n';
  };
  const TrainedModel model = start ? train(data.split.train, cfg.train, std::move(*start), hooks)
                                   : train(data.split.train, cfg.train, hooks);
  if (model.skipped_steps > 0 && !cfg.output_dir.empty()) {
    out << json{{"skipped_steps", model.skipped_steps}}.dump() << '\n';
  }
  return kExitOk;
}

fs::path default_model_path(const RunConfig &cfg, const std::string &explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  if (cfg.output_dir.empty()) throw ValidationError("--model is required when the config has no output_dir");
  return cfg.output_dir / "model.json";
}

struct EvalArgs {
  std::string config, model, out;
};

int run_eval(const EvalArgs &a, std::ostream &out) {
  const RunConfig cfg = load_run_config(a.config);
  const PreparedData data = prepare_data(cfg);
  Checkpoint ckpt = load_checkpoint(default_model_path(cfg, a.model));
  TrainedModel model{ckpt.config, std::move(ckpt.state), {}, 0};
  const EvalReport report =
      evaluate(model, data.split.train, data.split.heldout, cfg.eval, data.fingerprint, cfg.num_threads);
  const std::string text = to_json(report).dump(2) + "\n";
  fs::path dest = a.out;
  if (dest.empty() && !cfg.output_dir.empty()) dest = cfg.output_dir / "eval.json";
  if (!dest.empty()) write_file_atomic(dest, text);
  out << text;
  return kExitOk;
}

struct EmbedArgs {
  std::string model, config, edges, features, out;
  bool binary = false;
  size_t threads = 1;
};

int run_embed(const EmbedArgs &a) {
  const Checkpoint ckpt = load_checkpoint(a.model);
  GraphStore graph;
  if (!a.config.empty()) {
    graph = prepare_data(load_run_config(a.config)).split.train;
  } else if (!a.edges.empty() && !a.features.empty()) {
    graph = load_graph(a.edges, a.features);
  } else {
    throw ValidationError("embed needs --config or both --edges and --features");
  }
  const auto table = export_embeddings(ckpt.state.params, graph, ckpt.config.sampling.k,
                                       ckpt.config.sampling.fanout, a.threads);
  save_embeddings(table, a.out, a.binary);
  return kExitOk;
}

struct IndexArgs {
  std::string embeddings, out;
  AnnConfig ann;
};

int run_index(const IndexArgs &a, std::ostream &out) {
  const AnnIndex index = AnnIndex::build(load_embeddings(a.embeddings), a.ann);
  index.save(a.out);
  out << json{{"num_nodes", index.size()}, {"max_level", index.max_level()}, {"entry_point", index.entry_point()}}
             .dump()
      << '\n';
  return kExitOk;
}

struct RetrieveArgs {
  std::string embeddings, index, queries;
  size_t k = 10;
  size_t ef_search = 64;
  bool include_self = false;
};

// Query file: one line per query, "query_id [excluded_id ...]". Blank lines
// and lines starting with '#' are skipped.
int run_retrieve(const RetrieveArgs &a, std::ostream &out) {
  if (a.k == 0) throw ValidationError("--k must be >= 1");
  const EmbeddingTable table = load_embeddings(a.embeddings);
  std::optional<AnnIndex> index;
  if (!a.index.empty()) {
    index = AnnIndex::load(a.index);
    if (index->size() != table.num_nodes() || index->dim() != table.dim()) {
      throw ValidationError("index and embedding table disagree on shape");
    }
    if (a.ef_search < a.k) throw ValidationError("ef_search must be >= k");
  }
  std::ifstream in(a.queries);
  if (!in) throw IoError("cannot open " + a.queries);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream tokens(line);
    std::vector<NodeId> ids;
    std::string tok;
    while (tokens >> tok) {
      uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError(a.queries + ":" + std::to_string(lineno) + ": bad node id '" + tok + "'");
      }
      if (v >= table.num_nodes()) {
        throw ValidationError(a.queries + ":" + std::to_string(lineno) + ": node id " + tok + " out of range");
      }
      ids.push_back(static_cast<NodeId>(v));
    }
    if (ids.empty()) continue;
    const NodeId query = ids.front();
    std::vector<NodeId> exclude(ids.begin() + 1, ids.end());
    if (!a.include_self) exclude.push_back(query);
    const std::vector<ScoredId> hits = index ? index->search(table.row(query), a.k, a.ef_search, exclude)
                                             : exact_topk(table, table.row(query), a.k, exclude).items;
    for (size_t r = 0; r < hits.size(); ++r) {
      out << query << ' ' << hits[r].id << ' ' << r + 1 << ' ' << shortest(hits[r].score) << '\n';
    }
  }
  return kExitOk;
}

struct CompareArgs {
  std::string baseline, ssmtl, out;
  double margin = kDefaultNegativeTransferMargin;
};

int run_compare(const CompareArgs &a, std::ostream &out) {
  const DeltaReport r = compare_runs(load_eval_report(a.baseline), load_eval_report(a.ssmtl), a.margin);
  const std::string text = to_json(r).dump(2) + "\n";
  if (!a.out.empty()) write_file_atomic(a.out, text);
  out << text;
  return kExitOk;
}

struct GradcheckArgs {
  uint64_t seed = 0;
  size_t num_seeds = 1;
};

int run_gradcheck_cmd(const GradcheckArgs &a, std::ostream &out) {
  bool ok = true;
  for (size_t i = 0; i < a.num_seeds; ++i) {
    const GradcheckReport report = run_gradcheck(a.seed + i);
    for (const auto &c : report.cases) {
      out << (c.passed ? "PASS " : "FAIL ") << "seed=" << a.seed + i << ' ' << c.name
          << " max_rel_error=" << c.max_rel_error << '\n';
    }
    ok = ok && report.passed();
  }
  return ok ? kExitOk : kExitFailure;
}

void print_error(std::ostream &err, const std::string &kind, const std::string &message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int cli_main(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Multitask graph embedding training, retrieval and evaluation", "ssmtl"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto *synth_cmd = app.add_subcommand("synth", "Generate a stochastic-block-model graph");
  synth_cmd->add_option("--config", synth.config, "JSON file with generator settings");
  synth_cmd->add_option("--num-nodes", synth.graph.num_nodes);
  synth_cmd->add_option("--communities", synth.graph.num_communities);
  synth_cmd->add_option("--p-in", synth.graph.p_in);
  synth_cmd->add_option("--p-out", synth.graph.p_out);
  synth_cmd->add_option("--feature-dim", synth.graph.feature_dim);
  synth_cmd->add_option("--cold-start-fraction", synth.graph.cold_start_fraction);
  synth_cmd->add_option("--seed", synth.graph.seed);
  synth_cmd->add_option("--edges", synth.edges, "Output edge list")->required();
  synth_cmd->add_option("--features", synth.features, "Output feature rows")->required();

  TrainArgs train_args;
  auto *train_cmd = app.add_subcommand("train", "Train on the split graph of a run config");
  train_cmd->add_option("--config", train_args.config)->required();
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint to continue from");
  train_cmd->add_option("--output-dir", train_args.output_dir, "Overrides output_dir");

  EvalArgs eval_args;
  auto *eval_cmd = app.add_subcommand("eval", "Evaluate a trained model on held-out edges");
  eval_cmd->add_option("--config", eval_args.config)->required();
  eval_cmd->add_option("--model", eval_args.model, "Defaults to <output_dir>/model.json");
  eval_cmd->add_option("--out", eval_args.out, "Defaults to <output_dir>/eval.json");

  EmbedArgs embed;
  auto *embed_cmd = app.add_subcommand("embed", "Export node embeddings");
  embed_cmd->add_option("--model", embed.model)->required();
  embed_cmd->add_option("--config", embed.config, "Embed the training graph of this run config");
  embed_cmd->add_option("--edges", embed.edges);
  embed_cmd->add_option("--features", embed.features);
  embed_cmd->add_option("--out", embed.out)->required();
  embed_cmd->add_flag("--binary", embed.binary);
  embed_cmd->add_option("--threads", embed.threads)->check(CLI::PositiveNumber);

  IndexArgs index_args;
  auto *index_cmd = app.add_subcommand("index", "Build an approximate nearest-neighbor index");
  index_cmd->add_option("--embeddings", index_args.embeddings)->required();
  index_cmd->add_option("--out", index_args.out)->required();
  index_cmd->add_option("--m-conn", index_args.ann.m_conn);
  index_cmd->add_option("--ef-construction", index_args.ann.ef_construction);
  index_cmd->add_option("--seed", index_args.ann.seed);

  RetrieveArgs retrieve;
  auto *retrieve_cmd = app.add_subcommand("retrieve", "Answer top-k queries from a file");
  retrieve_cmd->add_option("--embeddings", retrieve.embeddings)->required();
  retrieve_cmd->add_option("--queries", retrieve.queries, "Lines of: query_id [excluded_id ...]")->required();
  retrieve_cmd->add_option("--index", retrieve.index, "Use this ANN index instead of an exact scan");
  retrieve_cmd->add_option("--k", retrieve.k);
  retrieve_cmd->add_option("--ef-search", retrieve.ef_search);
  retrieve_cmd->add_flag("--include-self", retrieve.include_self);

  CompareArgs compare;
  auto *compare_cmd = app.add_subcommand("compare", "Relative deltas between two eval reports");
  compare_cmd->add_option("baseline", compare.baseline)->required();
  compare_cmd->add_option("ssmtl", compare.ssmtl)->required();
  compare_cmd->add_option("--margin", compare.margin);
  compare_cmd->add_option("--out", compare.out);

  GradcheckArgs grad;
  auto *grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad_cmd->add_option("--seed", grad.seed);
  grad_cmd->add_option("--seeds", grad.num_seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
      return kExitOk;
    }
    err << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*synth_cmd) return run_synth(synth, out);
    if (*train_cmd) return run_train(train_args, out);
    if (*eval_cmd) return run_eval(eval_args, out);
    if (*embed_cmd) return run_embed(embed);
    if (*index_cmd) return run_index(index_args, out);
    if (*retrieve_cmd) return run_retrieve(retrieve, out);
    if (*compare_cmd) return run_compare(compare, out);
    if (*grad_cmd) return run_gradcheck_cmd(grad, out);
  } catch (const Error &e) {
    print_error(err, e.kind(), e.what());
    return kExitFailure;
  } catch (const json::exception &e) {
    print_error(err, "validation", e.what());
    return kExitFailure;
  } catch (const std::exception &e) {
    print_error(err, "internal", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace ssmtl
