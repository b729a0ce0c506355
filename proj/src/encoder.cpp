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

#include "ssmtl/encoder.hpp"

#include <cmath>

#include "ssmtl/errors.hpp"
#include "ssmtl/random.hpp"

namespace ssmtl {

namespace {

Matrix glorot(size_t fan_in, size_t fan_out, Rng &rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (double &v : m.data) v = rng.uniform(-bound, bound);
  return m;
}

void expect_dims(const Matrix &m, size_t rows, size_t cols, const std::string &name) {
  if (m.rows != rows || m.cols != cols) {
    throw ShapeError(name + " is " + m.shape_string() + ", expected " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (layer_dims.size() < 2) throw ValidationError("encoder needs at least one layer (two dims)");
  for (size_t d : layer_dims) {
    if (d == 0) throw ValidationError("encoder layer dimension must be positive");
  }
  if (cca_hidden_dim == 0 || cca_projection_dim == 0 || mae_hidden_dim == 0) {
    throw ValidationError("head dimensions must be positive");
  }
}

std::vector<std::pair<std::string, Matrix *>> EncoderParams::named_tensors() {
  std::vector<std::pair<std::string, Matrix *>> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "gat" + std::to_string(i) + ".";
    out.emplace_back(p + "weight", &layers[i].weight);
    out.emplace_back(p + "att_src", &layers[i].att_src);
    out.emplace_back(p + "att_dst", &layers[i].att_dst);
  }
  out.emplace_back("cca_head.w1", &cca_w1);
  out.emplace_back("cca_head.w2", &cca_w2);
  out.emplace_back("mae_head.weight", &mae_head);
  out.emplace_back("mae_decoder.weight", &mae_decoder);
  return out;
}

std::vector<std::pair<std::string, const Matrix *>> EncoderParams::named_tensors() const {
  std::vector<std::pair<std::string, const Matrix *>> out;
  for (auto &[name, m] : const_cast<EncoderParams *>(this)->named_tensors()) out.emplace_back(name, m);
  return out;
}

void EncoderParams::validate() const {
  if (layers.empty()) throw ValidationError("encoder has no layers");
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto &l = layers[i];
    const std::string p = "gat" + std::to_string(i);
    if (i > 0 && l.in_dim() != layers[i - 1].out_dim()) {
      throw ShapeError(p + " input dim " + std::to_string(l.in_dim()) + " != previous output dim " +
                       std::to_string(layers[i - 1].out_dim()));
    }
    expect_dims(l.att_src, l.out_dim(), 1, p + ".att_src");
    expect_dims(l.att_dst, l.out_dim(), 1, p + ".att_dst");
  }
  expect_dims(cca_w1, embedding_dim(), cca_w1.cols, "cca_head.w1");
  expect_dims(cca_w2, cca_w1.cols, cca_w2.cols, "cca_head.w2");
  expect_dims(mae_head, embedding_dim(), mae_head.cols, "mae_head.weight");
  expect_dims(mae_decoder, mae_head.cols, input_dim(), "mae_decoder.weight");
  for (const auto &[name, m] : named_tensors()) {
    if (!m->all_finite()) throw NumericError(name + " contains non-finite values");
  }
}

EncoderParams init_params(const EncoderConfig &cfg, uint64_t rng_seed) {
  cfg.validate();
  Rng rng(rng_seed);
  EncoderParams p;
  for (size_t i = 0; i + 1 < cfg.layer_dims.size(); ++i) {
    GatLayerParams l;
    l.weight = glorot(cfg.layer_dims[i], cfg.layer_dims[i + 1], rng);
    l.att_src = glorot(cfg.layer_dims[i + 1], 1, rng);
    l.att_dst = glorot(cfg.layer_dims[i + 1], 1, rng);
    l.leaky_slope = cfg.leaky_slope;
    p.layers.push_back(std::move(l));
  }
  const size_t emb = cfg.layer_dims.back();
  p.cca_w1 = glorot(emb, cfg.cca_hidden_dim, rng);
  p.cca_w2 = glorot(cfg.cca_hidden_dim, cfg.cca_projection_dim, rng);
  p.mae_head = glorot(emb, cfg.mae_hidden_dim, rng);
  p.mae_decoder = glorot(cfg.mae_hidden_dim, cfg.layer_dims.front(), rng);
  return p;
}

MessageGraph MessageGraph::from(size_t num_nodes, std::span<const LocalEdge> edges) {
  MessageGraph g;
  g.num_nodes = num_nodes;
  g.center.reserve(edges.size() + num_nodes);
  g.neighbor.reserve(edges.size() + num_nodes);
  for (const LocalEdge &e : edges) {
    if (e.src >= num_nodes || e.dst >= num_nodes) {
      throw ShapeError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                       ") outside " + std::to_string(num_nodes) + " nodes");
    }
    g.center.push_back(e.dst);
    g.neighbor.push_back(e.src);
  }
  for (size_t i = 0; i < num_nodes; ++i) {
    g.center.push_back(i);
    g.neighbor.push_back(i);
  }
  g.inv_degree = Matrix(num_nodes, 1);
  for (size_t c : g.center) g.inv_degree.data[c] += 1.0;
  for (double &v : g.inv_degree.data) v = 1.0 / v;
  return g;
}

std::vector<Tensor> BoundEncoder::tensors() const {
  std::vector<Tensor> out;
  for (const auto &l : layers) {
    out.push_back(l.weight);
    out.push_back(l.att_src);
    out.push_back(l.att_dst);
  }
  out.push_back(cca_w1);
  out.push_back(cca_w2);
  out.push_back(mae_head);
  out.push_back(mae_decoder);
  return out;
}

BoundEncoder bind(Tape &tape, const EncoderParams &params, bool trainable) {
  auto put = [&](const Matrix &m) { return trainable ? tape.variable(m) : tape.constant(m); };
  BoundEncoder b;
  for (const auto &l : params.layers) {
    b.layers.push_back({put(l.weight), put(l.att_src), put(l.att_dst), l.leaky_slope});
  }
  b.cca_w1 = put(params.cca_w1);
  b.cca_w2 = put(params.cca_w2);
  b.mae_head = put(params.mae_head);
  b.mae_decoder = put(params.mae_decoder);
  return b;
}

Tensor gat_layer(const BoundLayer &layer, const MessageGraph &graph, const Tensor &h,
                 bool apply_relu, Tensor *attention) {
  if (h.rows() != graph.num_nodes) {
    throw ShapeError("gat layer: " + std::to_string(h.rows()) + " feature rows for " +
                     std::to_string(graph.num_nodes) + " nodes");
  }
  const Tensor wh = op::matmul(h, layer.weight);
  const Tensor score_center = op::matmul(wh, layer.att_src);
  const Tensor score_neighbor = op::matmul(wh, layer.att_dst);
  const Tensor raw = op::leaky_relu(op::add(op::gather_rows(score_center, graph.center),
                                            op::gather_rows(score_neighbor, graph.neighbor)),
                                    layer.leaky_slope);
  const Tensor alpha = op::segment_softmax(raw, graph.center, graph.num_nodes);
  if (attention != nullptr) *attention = alpha;
  const Tensor messages = op::hadamard(op::gather_rows(wh, graph.neighbor), alpha);
  const Tensor out = op::scatter_add_rows(messages, graph.center, graph.num_nodes);
  return apply_relu ? op::relu(out) : out;
}

Tensor encode(const BoundEncoder &enc, const MessageGraph &graph, const Tensor &features) {
  Tensor h = features;
  for (size_t i = 0; i < enc.layers.size(); ++i) {
    h = gat_layer(enc.layers[i], graph, h, i + 1 < enc.layers.size());
  }
  return h;
}

Tensor cca_head(const BoundEncoder &enc, const Tensor &z) {
  return op::matmul(op::relu(op::matmul(z, enc.cca_w1)), enc.cca_w2);
}

Tensor mae_reconstruct(const BoundEncoder &enc, const MessageGraph &graph,
                       std::span<const uint32_t> query_locals, double mask_value,
                       const Tensor &z) {
  Tape &tape = *z.tape();
  const Tensor hidden = op::matmul(z, enc.mae_head);
  Matrix keep(hidden.rows(), 1, 1.0);
  Matrix fill(hidden.rows(), hidden.cols());
  for (uint32_t q : query_locals) {
    if (q >= hidden.rows()) throw ShapeError("query local " + std::to_string(q) + " out of range");
    keep.data[q] = 0.0;
    for (double &v : fill.row(q)) v = mask_value;
  }
  const Tensor remasked =
      op::add(op::hadamard(hidden, tape.constant(std::move(keep))), tape.constant(std::move(fill)));
  const Tensor summed = op::scatter_add_rows(op::gather_rows(remasked, graph.neighbor),
                                             graph.center, graph.num_nodes);
  const Tensor mean = op::hadamard(summed, tape.constant(graph.inv_degree));
  return op::matmul(mean, enc.mae_decoder);
}

// ---------------------------------------------------------------------------

AttentionCoefficients gat_attention(const GatLayerParams &layer, const Matrix &h,
                                    std::span<const LocalEdge> edges) {
  Tape tape;
  const MessageGraph g = MessageGraph::from(h.rows, edges);
  const BoundLayer bl{tape.constant(layer.weight), tape.constant(layer.att_src),
                      tape.constant(layer.att_dst), layer.leaky_slope};
  Tensor alpha;
  gat_layer(bl, g, tape.constant(h), false, &alpha);
  return {g.center, g.neighbor, alpha.value().data};
}

Matrix gat_layer_forward(const GatLayerParams &layer, const Subgraph &sub, const Matrix &h,
                         bool final_layer) {
  Tape tape;
  const MessageGraph g = MessageGraph::from(sub);
  const BoundLayer bl{tape.constant(layer.weight), tape.constant(layer.att_src),
                      tape.constant(layer.att_dst), layer.leaky_slope};
  return gat_layer(bl, g, tape.constant(h), !final_layer).value();
}

Matrix encode(const EncoderParams &params, const Subgraph &sub) {
  if (sub.local_features.cols != params.input_dim()) {
    throw ShapeError("subgraph feature dim " + std::to_string(sub.local_features.cols) +
                     " != encoder input dim " + std::to_string(params.input_dim()));
  }
  Tape tape;
  const BoundEncoder enc = bind(tape, params, false);
  return encode(enc, MessageGraph::from(sub), tape.constant(sub.local_features)).value();
}

Matrix cca_head(const EncoderParams &params, const Matrix &z) {
  Tape tape;
  const BoundEncoder enc = bind(tape, params, false);
  return cca_head(enc, tape.constant(z)).value();
}

Matrix mae_reconstruct(const EncoderParams &params, const Subgraph &sub_masked, const Matrix &z,
                       double mask_value) {
  Tape tape;
  const BoundEncoder enc = bind(tape, params, false);
  return mae_reconstruct(enc, MessageGraph::from(sub_masked), sub_masked.query_locals, mask_value,
                         tape.constant(z))
      .value();
}

}  // namespace ssmtl
