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
#include <span>
#include <string>
#include <vector>

#include "ssmtl/autodiff.hpp"
#include "ssmtl/matrix.hpp"
#include "ssmtl/sampling.hpp"

namespace ssmtl {

/// Single-head graph attention layer, no bias.
///
/// For a node i aggregating over j in N(i) + {i}:
///   e_ij  = leaky_relu(att_src . (W h_i) + att_dst . (W h_j))
///   a_ij  = softmax_j(e_ij)
///   h'_i  = relu(sum_j a_ij W h_j)      (no relu on the last layer)
struct GatLayerParams {
  Matrix weight;   // d_in x d_out
  Matrix att_src;  // d_out x 1, scores the aggregating node
  Matrix att_dst;  // d_out x 1, scores the neighbor
  double leaky_slope = 0.2;

  size_t in_dim() const { return weight.rows; }
  size_t out_dim() const { return weight.cols; }
  friend bool operator==(const GatLayerParams &, const GatLayerParams &) = default;
};

struct EncoderConfig {
  /// input dim, hidden dims..., embedding dim. One GAT layer per adjacent pair.
  std::vector<size_t> layer_dims{16, 64, 64};
  size_t cca_hidden_dim = 64;
  size_t cca_projection_dim = 64;
  size_t mae_hidden_dim = 64;
  double leaky_slope = 0.2;

  void validate() const;
};

/// Shared GAT backbone plus the two self-supervised heads:
/// CCA head Linear-ReLU-Linear, MAE head one Linear, and the MAE decoder's
/// mean-aggregation graph convolution weight.
struct EncoderParams {
  std::vector<GatLayerParams> layers;
  Matrix cca_w1;       // emb x cca_hidden
  Matrix cca_w2;       // cca_hidden x cca_projection
  Matrix mae_head;     // emb x mae_hidden
  Matrix mae_decoder;  // mae_hidden x input_dim

  size_t input_dim() const { return layers.front().in_dim(); }
  size_t embedding_dim() const { return layers.back().out_dim(); }

  /// Stable parameter order used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, Matrix *>> named_tensors();
  std::vector<std::pair<std::string, const Matrix *>> named_tensors() const;

  void validate() const;
  friend bool operator==(const EncoderParams &, const EncoderParams &) = default;
};

/// Glorot-uniform init: every weight in +-sqrt(6 / (fan_in + fan_out)).
EncoderParams init_params(const EncoderConfig &cfg, uint64_t rng_seed);

/// Message-passing view of a subgraph: every directed local edge plus one
/// self-loop per node. Edge e carries a message from `neighbor[e]` into
/// `center[e]`.
struct MessageGraph {
  size_t num_nodes = 0;
  std::vector<size_t> center;
  std::vector<size_t> neighbor;
  Matrix inv_degree;  // num_nodes x 1, 1 / |N(i) + {i}|

  static MessageGraph from(size_t num_nodes, std::span<const LocalEdge> edges);
  static MessageGraph from(const Subgraph &sub) { return from(sub.num_nodes(), sub.local_edges); }
};

// ---------------------------------------------------------------------------
// Tape-level forward passes (used for training and gradient checks).

struct BoundLayer {
  Tensor weight, att_src, att_dst;
  double leaky_slope = 0.2;
};

struct BoundEncoder {
  std::vector<BoundLayer> layers;
  Tensor cca_w1, cca_w2, mae_head, mae_decoder;

  /// Same order as EncoderParams::named_tensors().
  std::vector<Tensor> tensors() const;
};

/// Places the parameters on `tape`, as variables when `trainable`.
BoundEncoder bind(Tape &tape, const EncoderParams &params, bool trainable);

/// Returns h'. When `attention` is non-null it receives the E x 1 tensor of
/// attention coefficients in MessageGraph edge order.
Tensor gat_layer(const BoundLayer &layer, const MessageGraph &graph, const Tensor &h,
                 bool apply_relu, Tensor *attention = nullptr);
Tensor encode(const BoundEncoder &enc, const MessageGraph &graph, const Tensor &features);
Tensor cca_head(const BoundEncoder &enc, const Tensor &z);
/// mae_head -> re-mask query rows with `mask_value` -> mean-aggregation graph
/// convolution into the input feature space.
Tensor mae_reconstruct(const BoundEncoder &enc, const MessageGraph &graph,
                       std::span<const uint32_t> query_locals, double mask_value,
                       const Tensor &z);

// ---------------------------------------------------------------------------
// Value-level conveniences (no gradients).

struct AttentionCoefficients {
  std::vector<size_t> center;
  std::vector<size_t> neighbor;
  std::vector<double> alpha;
};

AttentionCoefficients gat_attention(const GatLayerParams &layer, const Matrix &h,
                                    std::span<const LocalEdge> edges);
Matrix gat_layer_forward(const GatLayerParams &layer, const Subgraph &sub, const Matrix &h,
                         bool final_layer);
Matrix encode(const EncoderParams &params, const Subgraph &sub);
Matrix cca_head(const EncoderParams &params, const Matrix &z);
Matrix mae_reconstruct(const EncoderParams &params, const Subgraph &sub_masked, const Matrix &z,
                       double mask_value);

}  // namespace ssmtl
