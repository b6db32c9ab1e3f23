#pragma once

#include <cstddef>
#include <functional>

namespace conformer {

// Worker count: CONFORMER_THREADS when set and positive, else hardware concurrency.
std::size_t worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads. Work is split
// into contiguous blocks, so results written by index are deterministic.
// The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace conformer
