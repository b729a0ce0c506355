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

#include "ssmtl/config_io.hpp"

#include <algorithm>
#include <cstring>

#include "ssmtl/errors.hpp"

namespace ssmtl {

using nlohmann::json;

void reject_unknown_keys(const json &j, std::initializer_list<const char *> allowed,
                         const char *context) {
  if (!j.is_object()) throw ValidationError(std::string(context) + " must be a JSON object");
  for (const auto &[key, value] : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&key](const char *a) { return key == a; });
    if (!ok) throw ValidationError(std::string(context) + ": unknown field '" + key + "'");
  }
}

namespace {

template <typename T>
void read(const json &j, const char *key, T &out, const char *context) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception &) {
    throw ValidationError(std::string(context) + "." + key + " has the wrong type");
  }
}

json fanout_json(size_t fanout) {
  return fanout == kUnlimitedFanout ? json("unlimited") : json(fanout);
}

size_t fanout_from(const json &j) {
  if (j.is_string() && j.get<std::string>() == "unlimited") return kUnlimitedFanout;
  if (!j.is_number_unsigned()) throw ValidationError("sampling.fanout must be a positive integer or \"unlimited\"");
  return j.get<size_t>();
}

}  // namespace

void to_json(json &j, const EncoderConfig &c) {
  j = json{{"layer_dims", c.layer_dims},
           {"cca_hidden_dim", c.cca_hidden_dim},
           {"cca_projection_dim", c.cca_projection_dim},
           {"mae_hidden_dim", c.mae_hidden_dim},
           {"leaky_slope", c.leaky_slope}};
}

void from_json(const json &j, EncoderConfig &c) {
  reject_unknown_keys(j, {"layer_dims", "cca_hidden_dim", "cca_projection_dim", "mae_hidden_dim", "leaky_slope"},
                      "encoder");
  read(j, "layer_dims", c.layer_dims, "encoder");
  read(j, "cca_hidden_dim", c.cca_hidden_dim, "encoder");
  read(j, "cca_projection_dim", c.cca_projection_dim, "encoder");
  read(j, "mae_hidden_dim", c.mae_hidden_dim, "encoder");
  read(j, "leaky_slope", c.leaky_slope, "encoder");
}

void to_json(json &j, const TrainConfig &c) {
  json tasks = json::array();
  if (c.enabled_tasks.retrieval) tasks.push_back("retrieval");
  if (c.enabled_tasks.cca) tasks.push_back("cca");
  if (c.enabled_tasks.mae) tasks.push_back("mae");
  j = json{{"steps", c.steps},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2},
           {"adam_eps", c.adam_eps},
           {"grad_clip_norm", c.grad_clip_norm},
           {"weights", {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"gamma", c.weights.gamma}}},
           {"cca", {{"lambda", c.cca.lambda}}},
           {"mae", {{"y_exponent", c.mae.y_exponent}}},
           {"augmentation",
            {{"edge_drop_prob", c.augmentation.edge_drop_prob},
             {"feature_drop_prob", c.augmentation.feature_drop_prob},
             {"mask_value", c.augmentation.mask_value},
             {"seed", c.augmentation.seed}}},
           {"sampling",
            {{"k", c.sampling.k},
             {"fanout", fanout_json(c.sampling.fanout)},
             {"num_negatives", c.sampling.num_negatives}}},
           {"encoder", c.encoder},
           {"seed", c.seed},
           {"checkpoint_every", c.checkpoint_every},
           {"enabled_tasks", tasks},
           {"prefetch", c.prefetch}};
}

void from_json(const json &j, TrainConfig &c) {
  reject_unknown_keys(j,
                      {"steps", "batch_size", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
                       "grad_clip_norm", "weights", "cca", "mae", "augmentation", "sampling", "encoder",
                       "seed", "checkpoint_every", "enabled_tasks", "prefetch"},
                      "train config");
  const char *ctx = "train config";
  read(j, "steps", c.steps, ctx);
  read(j, "batch_size", c.batch_size, ctx);
  read(j, "learning_rate", c.learning_rate, ctx);
  read(j, "adam_beta1", c.adam_beta1, ctx);
  read(j, "adam_beta2", c.adam_beta2, ctx);
  read(j, "adam_eps", c.adam_eps, ctx);
  read(j, "grad_clip_norm", c.grad_clip_norm, ctx);
  read(j, "seed", c.seed, ctx);
  read(j, "checkpoint_every", c.checkpoint_every, ctx);
  read(j, "prefetch", c.prefetch, ctx);
  if (auto it = j.find("weights"); it != j.end()) {
    reject_unknown_keys(*it, {"alpha", "beta", "gamma"}, "weights");
    read(*it, "alpha", c.weights.alpha, "weights");
    read(*it, "beta", c.weights.beta, "weights");
    read(*it, "gamma", c.weights.gamma, "weights");
  }
  if (auto it = j.find("cca"); it != j.end()) {
    reject_unknown_keys(*it, {"lambda"}, "cca");
    read(*it, "lambda", c.cca.lambda, "cca");
  }
  if (auto it = j.find("mae"); it != j.end()) {
    reject_unknown_keys(*it, {"y_exponent"}, "mae");
    read(*it, "y_exponent", c.mae.y_exponent, "mae");
  }
  if (auto it = j.find("augmentation"); it != j.end()) {
    reject_unknown_keys(*it, {"edge_drop_prob", "feature_drop_prob", "mask_value", "seed"}, "augmentation");
    read(*it, "edge_drop_prob", c.augmentation.edge_drop_prob, "augmentation");
    read(*it, "feature_drop_prob", c.augmentation.feature_drop_prob, "augmentation");
    read(*it, "mask_value", c.augmentation.mask_value, "augmentation");
    read(*it, "seed", c.augmentation.seed, "augmentation");
  }
  if (auto it = j.find("sampling"); it != j.end()) {
    reject_unknown_keys(*it, {"k", "fanout", "num_negatives"}, "sampling");
    read(*it, "k", c.sampling.k, "sampling");
    if (it->contains("fanout")) c.sampling.fanout = fanout_from(it->at("fanout"));
    read(*it, "num_negatives", c.sampling.num_negatives, "sampling");
  }
  if (auto it = j.find("encoder"); it != j.end()) from_json(*it, c.encoder);
  if (auto it = j.find("enabled_tasks"); it != j.end()) {
    if (!it->is_array()) throw ValidationError("enabled_tasks must be an array");
    c.enabled_tasks = {false, false, false};
    for (const auto &t : *it) {
      const std::string name = t.is_string() ? t.get<std::string>() : "";
      if (name == "retrieval") c.enabled_tasks.retrieval = true;
      else if (name == "cca") c.enabled_tasks.cca = true;
      else if (name == "mae") c.enabled_tasks.mae = true;
      else throw ValidationError("enabled_tasks: unknown task " + t.dump());
    }
  }
}

void to_json(json &j, const SyntheticGraphConfig &c) {
  j = json{{"num_nodes", c.num_nodes},
           {"num_communities", c.num_communities},
           {"p_in", c.p_in},
           {"p_out", c.p_out},
           {"feature_dim", c.feature_dim},
           {"cold_start_fraction", c.cold_start_fraction},
           {"indicator_noise", c.indicator_noise},
           {"seed", c.seed}};
}

void from_json(const json &j, SyntheticGraphConfig &c) {
  const char *ctx = "synthetic";
  reject_unknown_keys(j, {"num_nodes", "num_communities", "p_in", "p_out", "feature_dim",
                          "cold_start_fraction", "indicator_noise", "seed"},
                      ctx);
  read(j, "num_nodes", c.num_nodes, ctx);
  read(j, "num_communities", c.num_communities, ctx);
  read(j, "p_in", c.p_in, ctx);
  read(j, "p_out", c.p_out, ctx);
  read(j, "feature_dim", c.feature_dim, ctx);
  read(j, "cold_start_fraction", c.cold_start_fraction, ctx);
  read(j, "indicator_noise", c.indicator_noise, ctx);
  read(j, "seed", c.seed, ctx);
}

}  // namespace ssmtl
