#pragma once

#include <cstdint>
#include <functional>

namespace dmphn {

// Global worker count used by parallel_for. 1 disables threading entirely.
void set_num_threads(int n);
int num_threads();

// Runs fn over contiguous chunks covering [0, n). Chunk boundaries depend on
// the worker count, so callers must only use it where per-index work writes
// disjoint outputs and each output's reduction order is internal to one index;
// results are then identical for any thread count.
void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace dmphn
