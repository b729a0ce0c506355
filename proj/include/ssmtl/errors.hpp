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

#include <stdexcept>
#include <string>

namespace ssmtl {

/// Base of every error raised by the library. `kind()` is a stable,
/// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &what) : std::runtime_error(what) {}
  virtual const char *kind() const noexcept = 0;
};

#define SSMTL_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    using Error::Error;                                                 \
    const char *kind() const noexcept override { return tag; }          \
  }

/// Malformed text input. Carries the offending line when known.
SSMTL_DEFINE_ERROR(ParseError, "parse");
/// Input that parses but breaks a documented precondition or invariant.
SSMTL_DEFINE_ERROR(ValidationError, "validation");
/// Tensor shapes that do not conform to a primitive's shape rule.
SSMTL_DEFINE_ERROR(ShapeError, "shape");
/// Argument outside the mathematical domain of a primitive (log of a
/// non-positive value, fractional power of a negative value).
SSMTL_DEFINE_ERROR(DomainError, "domain");
/// NaN or Inf produced where finite values are required.
SSMTL_DEFINE_ERROR(NumericError, "numeric");
/// API misuse, e.g. calling backward on a non-scalar.
SSMTL_DEFINE_ERROR(ContractError, "contract");
/// File system failures.
SSMTL_DEFINE_ERROR(IoError, "io");

#undef SSMTL_DEFINE_ERROR

}  // namespace ssmtl
