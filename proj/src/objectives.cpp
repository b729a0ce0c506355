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

#include "ssmtl/objectives.hpp"

#include <cmath>
#include <string>

#include "ssmtl/errors.hpp"

namespace ssmtl {

namespace {

void require_finite_nonneg(double v, const char *name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw ValidationError(std::string(name) + " must be finite and >= 0, got " + std::to_string(v));
  }
}

void check_one_hot(const Matrix &labels) {
  for (size_t r = 0; r < labels.rows; ++r) {
    size_t ones = 0;
    for (double v : labels.row(r)) {
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw ValidationError("labels row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (ones != 1) {
      throw ValidationError("labels row " + std::to_string(r) + " has " + std::to_string(ones) +
                            " positives, expected exactly 1");
    }
  }
}

}  // namespace

void LossWeights::validate(bool retrieval_enabled) const {
  require_finite_nonneg(alpha, "alpha");
  require_finite_nonneg(beta, "beta");
  require_finite_nonneg(gamma, "gamma");
  if (retrieval_enabled && !(alpha > 0.0)) {
    throw ValidationError("alpha must be > 0 while the retrieval task is enabled");
  }
}

void CcaConfig::validate() const { require_finite_nonneg(lambda, "cca lambda"); }

void MaeConfig::validate() const {
  if (!std::isfinite(y_exponent) || y_exponent < 1.0) {
    throw ValidationError("mae y_exponent must be >= 1, got " + std::to_string(y_exponent));
  }
}

Tensor cca_loss(const Tensor &za, const Tensor &zb, const CcaConfig &cfg) {
  cfg.validate();
  if (za.rows() != zb.rows() || za.cols() != zb.cols()) {
    throw ShapeError("cca_loss: views have shapes " + za.value().shape_string() + " and " +
                     zb.value().shape_string());
  }
  if (za.rows() < 2) throw ValidationError("cca_loss needs at least 2 rows, got " + std::to_string(za.rows()));
  Tape &tape = *za.tape();
  const Tensor a = op::standardize_columns(za);
  const Tensor b = op::standardize_columns(zb);
  const Tensor invariance = op::frobenius_sq(op::sub(a, b));
  if (cfg.lambda == 0.0) return invariance;
  const Tensor eye = tape.constant(Matrix::identity(za.cols()));
  const Tensor dec_a = op::frobenius_sq(op::sub(op::matmul(op::transpose(a), a), eye));
  const Tensor dec_b = op::frobenius_sq(op::sub(op::matmul(op::transpose(b), b), eye));
  return op::add(invariance, op::scale(op::add(dec_a, dec_b), cfg.lambda));
}

Tensor mae_loss(const Tensor &originals, const Tensor &reconstructed, const MaeConfig &cfg) {
  cfg.validate();
  const Matrix &X = originals.value();
  if (!X.same_shape(reconstructed.value())) {
    throw ShapeError("mae_loss: originals " + X.shape_string() + " vs reconstruction " +
                     reconstructed.value().shape_string());
  }
  if (X.rows == 0) throw ValidationError("mae_loss: no masked rows");
  for (size_t r = 0; r < X.rows; ++r) {
    double s = 0.0;
    for (double v : X.row(r)) s += v * v;
    if (std::sqrt(s) < kNormalizeFloor) {
      throw ValidationError("mae_loss: original row " + std::to_string(r) +
                            " has zero norm; the reconstruction target is undefined");
    }
  }
  Tape &tape = *originals.tape();
  const Tensor cos = op::row_dot(op::l2_normalize_rows(originals), op::l2_normalize_rows(reconstructed));
  // relu guards against 1 - cos dipping below zero by rounding.
  const Tensor err = op::relu(op::sub(tape.constant(Matrix(X.rows, 1, 1.0)), cos));
  return op::mean_scalar(op::power(err, cfg.y_exponent));
}

Tensor retrieval_loss(const Tensor &logits, const Matrix &labels) {
  if (!logits.value().same_shape(labels)) {
    throw ShapeError("retrieval_loss: logits " + logits.value().shape_string() + " vs labels " +
                     labels.shape_string());
  }
  if (labels.cols < 2) throw ValidationError("retrieval_loss needs at least 2 candidates");
  if (labels.rows == 0) throw ValidationError("retrieval_loss: empty batch");
  check_one_hot(labels);
  Tape &tape = *logits.tape();
  const Tensor picked = op::hadamard(op::row_log_softmax(logits), tape.constant(labels));
  return op::scale(op::sum_scalar(picked), -1.0 / static_cast<double>(labels.rows));
}

Tensor retrieval_logits(const Tensor &z, std::span<const uint32_t> query_locals,
                        std::span<const uint32_t> candidate_locals, size_t num_candidates) {
  if (candidate_locals.size() != query_locals.size() * num_candidates) {
    throw ShapeError("retrieval_logits: " + std::to_string(candidate_locals.size()) +
                     " candidates for " + std::to_string(query_locals.size()) + " queries x " +
                     std::to_string(num_candidates));
  }
  std::vector<size_t> qidx;
  qidx.reserve(candidate_locals.size());
  for (uint32_t q : query_locals) qidx.insert(qidx.end(), num_candidates, q);
  std::vector<size_t> cidx(candidate_locals.begin(), candidate_locals.end());
  const Tensor dots = op::row_dot(op::gather_rows(z, std::move(qidx)), op::gather_rows(z, std::move(cidx)));
  return op::reshape(dots, query_locals.size(), num_candidates);
}

Tensor combined_loss(const std::optional<Tensor> &retrieval, const std::optional<Tensor> &cca,
                     const std::optional<Tensor> &mae, const LossWeights &w, LossReport &report) {
  report = LossReport{};
  std::optional<Tensor> total;
  auto fold = [&](const std::optional<Tensor> &term, double weight, const char *name, double &raw,
                  double &weighted) {
    if (!term) return;
    raw = term->item();
    if (!std::isfinite(raw)) throw NumericError(std::string(name) + " loss is not finite");
    const Tensor scaled = op::scale(*term, weight);
    weighted = scaled.item();
    total = total ? op::add(*total, scaled) : scaled;
  };
  fold(retrieval, w.alpha, "retrieval", report.retrieval, report.weighted_retrieval);
  fold(cca, w.beta, "cca", report.cca, report.weighted_cca);
  fold(mae, w.gamma, "mae", report.mae, report.weighted_mae);
  if (!total) throw ContractError("combined_loss: no task enabled");
  report.combined = total->item();
  return *total;
}

double cca_loss(const Matrix &za, const Matrix &zb, const CcaConfig &cfg) {
  Tape tape;
  return cca_loss(tape.constant(za), tape.constant(zb), cfg).item();
}

double mae_loss(const Matrix &originals, const Matrix &reconstructed, const MaeConfig &cfg) {
  Tape tape;
  return mae_loss(tape.constant(originals), tape.constant(reconstructed), cfg).item();
}

double retrieval_loss(std::span<const double> query_emb, const Matrix &candidate_embs,
                      std::span<const double> labels) {
  if (query_emb.size() != candidate_embs.cols) {
    throw ShapeError("retrieval_loss: query dim " + std::to_string(query_emb.size()) +
                     " vs candidate dim " + std::to_string(candidate_embs.cols));
  }
  if (labels.size() != candidate_embs.rows) {
    throw ShapeError("retrieval_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(candidate_embs.rows) + " candidates");
  }
  Matrix logits(1, candidate_embs.rows);
  for (size_t j = 0; j < candidate_embs.rows; ++j) {
    double s = 0.0;
    for (size_t c = 0; c < query_emb.size(); ++c) s += query_emb[c] * candidate_embs(j, c);
    logits.data[j] = s;
  }
  Tape tape;
  return retrieval_loss(tape.constant(std::move(logits)),
                        Matrix(1, labels.size(), std::vector<double>(labels.begin(), labels.end())))
      .item();
}

LossReport combined_loss(double retrieval, double cca, double mae, const LossWeights &w) {
  const std::pair<const char *, double> parts[] = {{"retrieval", retrieval}, {"cca", cca}, {"mae", mae}};
  for (const auto &[name, v] : parts) {
    if (!std::isfinite(v)) throw NumericError(std::string(name) + " loss is not finite");
  }
  LossReport r;
  r.retrieval = retrieval;
  r.cca = cca;
  r.mae = mae;
  r.weighted_retrieval = w.alpha * retrieval;
  r.weighted_cca = w.beta * cca;
  r.weighted_mae = w.gamma * mae;
  r.combined = r.weighted_retrieval + r.weighted_cca + r.weighted_mae;
  return r;
}

double decorrelation_penalty(const Matrix &z) {
  Tape tape;
  const Tensor a = op::standardize_columns(tape.constant(z));
  return op::frobenius_sq(op::sub(op::matmul(op::transpose(a), a),
                                  tape.constant(Matrix::identity(z.cols))))
      .item();
}

}  // namespace ssmtl
