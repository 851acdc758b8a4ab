#pragma once

#include <cstddef>
#include <functional>

namespace repforge {

// Number of worker threads: REPFORGE_THREADS if set (clamped to >= 1),
// otherwise hardware concurrency capped at 8.
std::size_t worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads with static
// chunking. Blocks until done; the first exception thrown by any worker is
// rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace repforge
