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

#include <optional>
#include <span>

#include "ssmtl/autodiff.hpp"
#include "ssmtl/matrix.hpp"

namespace ssmtl {

/// Weights of the combined objective
///   L = alpha * L_retrieval + beta * L_cca + gamma * L_mae.
struct LossWeights {
  double alpha = 1.0;
  double beta = 1e-3;
  double gamma = 1e-3;

  void validate(bool retrieval_enabled) const;
};

struct CcaConfig {
  double lambda = 1e-3;
  void validate() const;
};

struct MaeConfig {
  double y_exponent = 2.0;
  void validate() const;
};

/// Raw and weighted values of one evaluation of the combined objective.
/// Disabled terms are 0.
struct LossReport {
  double retrieval = 0.0;
  double cca = 0.0;
  double mae = 0.0;
  double weighted_retrieval = 0.0;
  double weighted_cca = 0.0;
  double weighted_mae = 0.0;
  double combined = 0.0;

  friend bool operator==(const LossReport &, const LossReport &) = default;
};

// ---------------------------------------------------------------------------
// Tape-level losses.

/// Both views are column-standardized (mean 0, unit column norm), then
///   ||Za - Zb||_F^2 + lambda (||Za^T Za - I||_F^2 + ||Zb^T Zb - I||_F^2).
Tensor cca_loss(const Tensor &za, const Tensor &zb, const CcaConfig &cfg);

/// Mean over rows of (1 - cos(x_i, z_i))^y. Rows of `reconstructed` with
/// norm below 1e-12 count as cosine 0.
Tensor mae_loss(const Tensor &originals, const Tensor &reconstructed, const MaeConfig &cfg);

/// Per-row softmax cross entropy of `logits` (B x M) against one-hot
/// `labels`, averaged over rows.
Tensor retrieval_loss(const Tensor &logits, const Matrix &labels);

/// Dot-product logits: entry (b, j) = z[query_b] . z[candidate_{b,j}].
Tensor retrieval_logits(const Tensor &z, std::span<const uint32_t> query_locals,
                        std::span<const uint32_t> candidate_locals, size_t num_candidates);

/// Weighted sum of the enabled terms, filling `report`. Throws NumericError
/// naming the first non-finite term.
Tensor combined_loss(const std::optional<Tensor> &retrieval, const std::optional<Tensor> &cca,
                     const std::optional<Tensor> &mae, const LossWeights &w, LossReport &report);

// ---------------------------------------------------------------------------
// Value-level wrappers.

double cca_loss(const Matrix &za, const Matrix &zb, const CcaConfig &cfg);
double mae_loss(const Matrix &originals, const Matrix &reconstructed, const MaeConfig &cfg);
double retrieval_loss(std::span<const double> query_emb, const Matrix &candidate_embs,
                      std::span<const double> labels);
/// Combines already-computed scalar parts.
LossReport combined_loss(double retrieval, double cca, double mae, const LossWeights &w);

/// ||Z~^T Z~ - I||_F^2 for the column-standardized Z~ of `z`.
double decorrelation_penalty(const Matrix &z);

}  // namespace ssmtl
