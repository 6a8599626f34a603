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

#include "voxfuse/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace voxfuse::threading {

namespace {

constexpr std::int64_t kChunk = 4096;

int initial_thread_count() {
  if (const char* env = std::getenv("VOXFUSE_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

int& thread_count_ref() {
  static int count = initial_thread_count();
  return count;
}

}  // namespace

int thread_count() { return thread_count_ref(); }

void set_thread_count(int n) { thread_count_ref() = std::max(1, n); }

void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  const std::int64_t num_chunks = (n + kChunk - 1) / kChunk;
  const int workers =
      static_cast<int>(std::min<std::int64_t>(thread_count(), num_chunks));
  if (workers <= 1) {
    for (std::int64_t c = 0; c < num_chunks; ++c) {
      fn(c * kChunk, std::min(n, (c + 1) * kChunk));
    }
    return;
  }
  std::atomic<std::int64_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::int64_t c = next.fetch_add(1);
      if (c >= num_chunks) break;
      fn(c * kChunk, std::min(n, (c + 1) * kChunk));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int i = 1; i < workers; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

}  // namespace voxfuse::threading
