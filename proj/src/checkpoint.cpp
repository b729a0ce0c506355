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

#include "ssmtl/checkpoint.hpp"

#include <fstream>

#include "ssmtl/config_io.hpp"
#include "ssmtl/errors.hpp"

namespace ssmtl {

using nlohmann::json;

namespace {

constexpr const char *kFormat = "ssmtl-checkpoint";

json matrix_json(const std::string &name, const Matrix &m) {
  return json{{"name", name}, {"shape", {m.rows, m.cols}}, {"data", m.data}};
}

Matrix matrix_from(const json &j, const std::string &expected_name) {
  if (j.at("name").get<std::string>() != expected_name) {
    throw ValidationError("checkpoint tensor '" + j.at("name").get<std::string>() + "' where '" +
                          expected_name + "' was expected");
  }
  const auto shape = j.at("shape").get<std::vector<size_t>>();
  if (shape.size() != 2) throw ValidationError("checkpoint tensor " + expected_name + " has a bad shape");
  return Matrix(shape[0], shape[1], j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const std::filesystem::path &path, const TrainConfig &cfg,
                     const TrainState &state) {
  json tensors = json::array();
  json m = json::array();
  json v = json::array();
  const auto named = state.params.named_tensors();
  for (size_t i = 0; i < named.size(); ++i) {
    tensors.push_back(matrix_json(named[i].first, *named[i].second));
    m.push_back(matrix_json(named[i].first, state.optimizer.m.at(i)));
    v.push_back(matrix_json(named[i].first, state.optimizer.v.at(i)));
  }
  json doc{{"format", kFormat},
           {"version", kCheckpointVersion},
           {"next_step", state.next_step},
           {"config", cfg},
           {"num_layers", state.params.layers.size()},
           {"leaky_slope", state.params.layers.front().leaky_slope},
           {"tensors", tensors},
           {"optimizer", {{"step", state.optimizer.step}, {"m", m}, {"v", v}}}};
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << doc.dump() << '\n';
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception &e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    if (doc.value("format", "") != kFormat) throw ValidationError(path.string() + " is not a checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ValidationError("unsupported checkpoint version " + doc.at("version").dump());
    }
    Checkpoint ck;
    ck.config = doc.at("config").get<TrainConfig>();
    ck.state.next_step = doc.at("next_step").get<size_t>();
    const size_t num_layers = doc.at("num_layers").get<size_t>();
    ck.state.params.layers.resize(num_layers);
    for (auto &l : ck.state.params.layers) l.leaky_slope = doc.at("leaky_slope").get<double>();
    auto named = ck.state.params.named_tensors();
    const auto &tensors = doc.at("tensors");
    const auto &opt = doc.at("optimizer");
    if (tensors.size() != named.size() || opt.at("m").size() != named.size() ||
        opt.at("v").size() != named.size()) {
      throw ValidationError("checkpoint tensor count does not match its layer count");
    }
    for (size_t i = 0; i < named.size(); ++i) {
      *named[i].second = matrix_from(tensors[i], named[i].first);
      ck.state.optimizer.m.push_back(matrix_from(opt.at("m")[i], named[i].first));
      ck.state.optimizer.v.push_back(matrix_from(opt.at("v")[i], named[i].first));
    }
    ck.state.optimizer.step = opt.at("step").get<uint64_t>();
    ck.state.params.validate();
    return ck;
  } catch (const json::exception &e) {
    throw ValidationError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace ssmtl
