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

#include "ssmtl/gradcheck.hpp"

#include <algorithm>
#include <functional>

#include "ssmtl/autodiff.hpp"
#include "ssmtl/encoder.hpp"
#include "ssmtl/errors.hpp"
#include "ssmtl/objectives.hpp"
#include "ssmtl/random.hpp"

namespace ssmtl {

namespace {

using Inputs = std::vector<Matrix>;
using Builder = std::function<Tensor(std::span<const Tensor>)>;

Matrix uniform(Rng &rng, size_t r, size_t c, double lo, double hi) {
  Matrix m(r, c);
  for (double &x : m.data) x = rng.uniform(lo, hi);
  return m;
}

// Magnitudes in [0.1, 1] with random sign; keeps kinks out of the FD stencil.
Matrix away_from_zero(Rng &rng, size_t r, size_t c) {
  Matrix m(r, c);
  for (double &x : m.data) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return m;
}

// Contracts `out` against fixed random weights so every output entry matters.
Tensor contract(const Tensor &out, const Matrix &weights) {
  Tape &tape = *out.tape();
  return op::sum_scalar(op::hadamard(out, tape.constant(weights)));
}

double max_error_over_inputs(const Inputs &inputs, const Builder &build, Rng &rng) {
  Matrix weights;
  {
    Tape probe;
    std::vector<Tensor> ts;
    for (const auto &m : inputs) ts.push_back(probe.constant(m));
    const Tensor out = build(ts);
    weights = uniform(rng, out.rows(), out.cols(), -1.0, 1.0);
  }
  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto evaluate = [&](const Matrix &xi) {
      Tape tape;
      std::vector<Tensor> ts;
      for (size_t j = 0; j < inputs.size(); ++j) ts.push_back(tape.constant(j == i ? xi : inputs[j]));
      return contract(build(ts), weights).item();
    };
    Tape tape;
    std::vector<Tensor> ts;
    for (size_t j = 0; j < inputs.size(); ++j) {
      ts.push_back(j == i ? tape.variable(inputs[j]) : tape.constant(inputs[j]));
    }
    const Tensor x = ts[i];
    const auto grads = tape.backward(contract(build(ts), weights));
    const Matrix analytic = grads.contains(x) ? grads.at(x) : Matrix(inputs[i].rows, inputs[i].cols);
    worst = std::max(worst, gradient_relative_error(analytic, finite_difference_gradient(evaluate, inputs[i])));
  }
  return worst;
}

struct PrimitiveCase {
  Inputs inputs;
  PrimitiveAttrs attrs;
};

PrimitiveCase primitive_case(Primitive kind, Rng &rng) {
  PrimitiveCase c;
  switch (kind) {
    case Primitive::kMatmul:
      c.inputs = {uniform(rng, 3, 4, -1, 1), uniform(rng, 4, 2, -1, 1)};
      break;
    case Primitive::kAdd:
    case Primitive::kSub:
    case Primitive::kRowDot:
      c.inputs = {uniform(rng, 3, 4, -1, 1), uniform(rng, 3, 4, -1, 1)};
      break;
    case Primitive::kHadamard:
      c.inputs = {uniform(rng, 3, 4, -1, 1), uniform(rng, 3, 1, -1, 1)};
      break;
    case Primitive::kScale:
      c.inputs = {uniform(rng, 3, 4, -1, 1)};
      c.attrs.scalar = rng.uniform(-2.0, 2.0);
      break;
    case Primitive::kConcatCols:
      c.inputs = {uniform(rng, 3, 2, -1, 1), uniform(rng, 3, 3, -1, 1)};
      break;
    case Primitive::kRelu:
      c.inputs = {away_from_zero(rng, 3, 4)};
      break;
    case Primitive::kLeakyRelu:
      c.inputs = {away_from_zero(rng, 3, 4)};
      c.attrs.scalar = 0.2;
      break;
    case Primitive::kExp:
    case Primitive::kRowSoftmax:
    case Primitive::kRowLogSoftmax:
    case Primitive::kFrobeniusSq:
    case Primitive::kMeanScalar:
    case Primitive::kSumScalar:
    case Primitive::kTranspose:
      c.inputs = {uniform(rng, 3, 4, -1, 1)};
      break;
    case Primitive::kLog:
      c.inputs = {uniform(rng, 3, 4, 0.5, 2.0)};
      break;
    case Primitive::kPower:
      c.inputs = {uniform(rng, 3, 4, 0.5, 1.5)};
      c.attrs.scalar = 2.5;
      break;
    case Primitive::kMaskedRowSoftmax: {
      c.inputs = {uniform(rng, 3, 4, -1, 1)};
      c.attrs.mask.assign(12, 0);
      for (size_t r = 0; r < 3; ++r) {
        c.attrs.mask[r * 4 + rng.below(4)] = 1;
        for (size_t j = 0; j < 4; ++j) {
          if (rng.bernoulli(0.5)) c.attrs.mask[r * 4 + j] = 1;
        }
      }
      break;
    }
    case Primitive::kL2NormalizeRows:
      c.inputs = {away_from_zero(rng, 3, 4)};
      break;
    case Primitive::kStandardizeColumns:
      c.inputs = {uniform(rng, 5, 3, -1, 1)};
      break;
    case Primitive::kGatherRows:
      c.inputs = {uniform(rng, 3, 4, -1, 1)};
      c.attrs.index = {2, 0, 2, 1};
      break;
    case Primitive::kScatterAddRows:
      c.inputs = {uniform(rng, 3, 4, -1, 1)};
      c.attrs.index = {0, 2, 0};
      c.attrs.count = 4;
      break;
    case Primitive::kReshape:
      c.inputs = {uniform(rng, 3, 4, -1, 1)};
      c.attrs.rows = 2;
      c.attrs.cols = 6;
      break;
    case Primitive::kSegmentSoftmax:
      c.inputs = {uniform(rng, 6, 1, -1, 1)};
      c.attrs.index = {0, 1, 0, 2, 1, 0};
      c.attrs.count = 3;
      break;
  }
  return c;
}

// A random connected graph on 6 to 8 nodes with two query rows.
struct SmallProblem {
  Subgraph sub;
  EncoderParams params;
};

SmallProblem small_problem(Rng &rng) {
  const size_t n = 6 + rng.below(3);
  const size_t in_dim = 4;
  SmallProblem p;
  p.sub.local_features = uniform(rng, n, in_dim, -1, 1);
  std::vector<LocalEdge> undirected;
  for (uint32_t v = 1; v < n; ++v) undirected.push_back({static_cast<uint32_t>(rng.below(v)), v});
  for (uint32_t u = 0; u < n; ++u) {
    for (uint32_t v = u + 1; v < n; ++v) {
      if (rng.bernoulli(0.2)) undirected.push_back({u, v});
    }
  }
  std::sort(undirected.begin(), undirected.end());
  undirected.erase(std::unique(undirected.begin(), undirected.end()), undirected.end());
  for (const auto &e : undirected) {
    p.sub.local_edges.push_back(e);
    p.sub.local_edges.push_back({e.dst, e.src});
  }
  for (uint32_t i = 0; i < n; ++i) p.sub.global_ids.push_back(i);
  p.sub.query_locals = {0, 1};
  p.sub.hop_of.assign(n, 0);

  EncoderConfig cfg;
  cfg.layer_dims = {in_dim, 5, 4};
  cfg.cca_hidden_dim = 3;
  cfg.cca_projection_dim = 3;
  cfg.mae_hidden_dim = 3;
  p.params = init_params(cfg, rng.next_u64());
  // Attention vectors start larger than Glorot so the softmax is non-uniform.
  for (auto &layer : p.params.layers) {
    layer.att_src = uniform(rng, layer.out_dim(), 1, -1, 1);
    layer.att_dst = uniform(rng, layer.out_dim(), 1, -1, 1);
  }
  return p;
}

using LossBuilder = std::function<Tensor(Tape &, const BoundEncoder &)>;

double end_to_end_error(const EncoderParams &params, const LossBuilder &loss) {
  Tape tape;
  const BoundEncoder enc = bind(tape, params, true);
  const auto bound = enc.tensors();
  const auto grads = tape.backward(loss(tape, enc));
  double worst = 0.0;
  const auto names = params.named_tensors();
  for (size_t i = 0; i < names.size(); ++i) {
    auto f = [&](const Matrix &x) {
      EncoderParams perturbed = params;
      *perturbed.named_tensors()[i].second = x;
      Tape t;
      return loss(t, bind(t, perturbed, false)).item();
    };
    const Matrix &value = *names[i].second;
    const Matrix analytic = grads.contains(bound[i]) ? grads.at(bound[i]) : Matrix(value.rows, value.cols);
    worst = std::max(worst, gradient_relative_error(analytic, finite_difference_gradient(f, value)));
  }
  return worst;
}

}  // namespace

bool GradcheckReport::passed() const {
  return !cases.empty() && std::all_of(cases.begin(), cases.end(), [](const auto &c) { return c.passed; });
}

GradcheckReport run_gradcheck(uint64_t seed, double tolerance) {
  GradcheckReport report;
  auto record = [&](std::string name, double err) {
    report.cases.push_back({std::move(name), err, err < tolerance});
  };

  for (Primitive kind : all_primitives()) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(kind)));
    const PrimitiveCase c = primitive_case(kind, rng);
    const Builder build = [&](std::span<const Tensor> ts) { return primitive_forward(kind, ts, c.attrs); };
    record(std::string(primitive_name(kind)), max_error_over_inputs(c.inputs, build, rng));
  }

  Rng rng(derive_seed(seed, 1000));
  const SmallProblem p = small_problem(rng);
  const MessageGraph full = MessageGraph::from(p.sub);

  {
    const std::vector<uint32_t> queries{0, 1};
    const std::vector<uint32_t> candidates{2, 3, 4, 5, 4, 3};
    const Matrix labels = Matrix::from_rows({{1, 0, 0}, {1, 0, 0}});
    record("retrieval_loss", end_to_end_error(p.params, [&](Tape &tape, const BoundEncoder &enc) {
             const Tensor z = encode(enc, full, tape.constant(p.sub.local_features));
             return retrieval_loss(retrieval_logits(z, queries, candidates, 3), labels);
           }));
  }
  {
    const Subgraph a = augment_feature_drop(augment_edge_drop(p.sub, 0.3, rng.next_u64()), 0.25, rng.next_u64());
    const Subgraph b = augment_feature_drop(augment_edge_drop(p.sub, 0.3, rng.next_u64()), 0.25, rng.next_u64());
    const MessageGraph ga = MessageGraph::from(a);
    const MessageGraph gb = MessageGraph::from(b);
    const CcaConfig cfg{0.5};
    record("cca_loss", end_to_end_error(p.params, [&](Tape &tape, const BoundEncoder &enc) {
             const Tensor za = cca_head(enc, encode(enc, ga, tape.constant(a.local_features)));
             const Tensor zb = cca_head(enc, encode(enc, gb, tape.constant(b.local_features)));
             return cca_loss(za, zb, cfg);
           }));
  }
  {
    const MaskedSubgraph masked = mask_query_features(p.sub, 0.0);
    const MessageGraph g = MessageGraph::from(masked.subgraph);
    const MaeConfig cfg{2.0};
    record("mae_loss", end_to_end_error(p.params, [&](Tape &tape, const BoundEncoder &enc) {
             const Tensor z = encode(enc, g, tape.constant(masked.subgraph.local_features));
             const Tensor recon = mae_reconstruct(enc, g, masked.subgraph.query_locals, 0.0, z);
             std::vector<size_t> rows(masked.subgraph.query_locals.begin(), masked.subgraph.query_locals.end());
             return mae_loss(tape.constant(masked.originals), op::gather_rows(recon, std::move(rows)), cfg);
           }));
  }
  return report;
}

}  // namespace ssmtl
