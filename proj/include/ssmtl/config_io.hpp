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

#include "json.hpp"
#include "ssmtl/synthetic.hpp"
#include "ssmtl/trainer.hpp"

namespace ssmtl {

// JSON mapping for configuration structs. Field names are snake_case and
// mirror the struct members; missing fields keep their defaults and unknown
// fields are rejected with ValidationError.

void to_json(nlohmann::json &j, const TrainConfig &c);
void from_json(const nlohmann::json &j, TrainConfig &c);

void to_json(nlohmann::json &j, const SyntheticGraphConfig &c);
void from_json(const nlohmann::json &j, SyntheticGraphConfig &c);

void to_json(nlohmann::json &j, const EncoderConfig &c);
void from_json(const nlohmann::json &j, EncoderConfig &c);

/// Throws ValidationError if `j` has a key outside `allowed`.
void reject_unknown_keys(const nlohmann::json &j, std::initializer_list<const char *> allowed,
                         const char *context);

}  // namespace ssmtl
