// Copyright 2026 The voxfuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>

namespace voxfuse::threading {

/// Number of worker threads used by parallel_for. Defaults to the
/// VOXFUSE_THREADS environment variable, else 1.
int thread_count();
void set_thread_count(int n);

/// Runs fn(begin, end) over [0, n) split into fixed-size chunks.
/// Chunk boundaries depend only on n, never on the thread count, and each
/// chunk writes disjoint outputs, so results are byte-identical for any
/// --threads value.
void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace voxfuse::threading
