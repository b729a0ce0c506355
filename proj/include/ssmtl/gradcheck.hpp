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
#include <string>
#include <vector>

namespace ssmtl {

struct GradcheckCase {
  std::string name;
  /// gradient_relative_error of the tape gradient against central differences.
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  bool passed() const;
};

inline constexpr double kGradcheckTolerance = 1e-4;

/// Checks every tape primitive (each differentiable input separately) and the
/// retrieval, CCA and MAE losses end to end through the GAT backbone and
/// heads on a random graph of 6 to 8 nodes. Inputs are drawn from `seed`.
GradcheckReport run_gradcheck(uint64_t seed, double tolerance = kGradcheckTolerance);

}  // namespace ssmtl
