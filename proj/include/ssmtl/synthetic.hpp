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
#include <vector>

#include "ssmtl/graph.hpp"

namespace ssmtl {

/// Stochastic-block-model benchmark graph parameters.
struct SyntheticGraphConfig {
  size_t num_nodes = 1000;
  size_t num_communities = 2;
  double p_in = 0.02;
  double p_out = 0.002;
  size_t feature_dim = 16;
  double cold_start_fraction = 0.1;
  /// Std of the Gaussian noise added to the community indicator columns.
  double indicator_noise = 0.5;
  uint64_t seed = 0;

  void validate() const;
};

struct SyntheticGraph {
  GraphStore graph;
  std::vector<uint32_t> community;   // per node
  std::vector<NodeId> cold_start;    // nodes whose degree was capped
};

/// Communities are contiguous, near-equal id blocks. The first
/// `num_communities` feature columns hold a noisy one-hot community indicator;
/// the remaining columns are standard normal. Cold-start nodes keep at most
/// two of their edges.
SyntheticGraph generate_synthetic_graph(const SyntheticGraphConfig &cfg);

inline constexpr size_t kColdStartDegreeCap = 2;

}  // namespace ssmtl
