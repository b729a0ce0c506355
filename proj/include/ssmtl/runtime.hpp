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

namespace ssmtl {

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// OS after every step. Training allocates and frees the same large blocks
/// each step, and unmapping them costs more than the arithmetic. No-op
/// outside glibc. Call once at process start.
void configure_allocator();

}  // namespace ssmtl
