#pragma once

#include <cstddef>
#include <functional>

namespace focusmix::app {

// FOCUSMIX_THREADS when set to a positive integer, else the hardware concurrency (at least 1).
std::size_t thread_count();

// Calls fn(i) for i in [0, n) on up to thread_count() threads. Work is split
// into contiguous chunks; results must be written to per-index slots. The
// exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace focusmix::app
