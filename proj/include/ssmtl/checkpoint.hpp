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

#include <filesystem>

#include "ssmtl/trainer.hpp"

namespace ssmtl {

/// JSON checkpoint: format tag and version, config snapshot, next step
/// index, every named parameter tensor (shape + row-major data) and the Adam
/// moments. Doubles are written with round-trip precision, so a reload is
/// bit-identical.
void save_checkpoint(const std::filesystem::path &path, const TrainConfig &cfg,
                     const TrainState &state);

struct Checkpoint {
  TrainConfig config;
  TrainState state;
};

Checkpoint load_checkpoint(const std::filesystem::path &path);

inline constexpr int kCheckpointVersion = 1;

}  // namespace ssmtl
