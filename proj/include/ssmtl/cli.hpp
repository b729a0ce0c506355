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

#include <ostream>
#include <string>
#include <vector>

namespace ssmtl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `ssmtl` tool. `args` excludes the program name.
/// Usage errors print help and return 2; library errors print one JSON line
/// {"error": kind, "message": text} to `err` and return 1.
int cli_main(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace ssmtl
