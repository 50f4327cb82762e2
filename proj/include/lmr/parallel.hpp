#pragma once

#include <cstddef>
#include <functional>

namespace lmr {

/// Process-wide worker cap used by every parallel stage (default 1).
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs fn(i) for i in [0, n) on up to thread_count() threads. Each index is
/// visited exactly once; callers write results into pre-sized slots so output
/// never depends on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace lmr
