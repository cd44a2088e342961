#pragma once

#include <cstddef>
#include <functional>

namespace lamelab {

// Process-wide worker count used by parallel_for (default 1).
void set_threads(int n);
int threads();

// Runs body(i) for i in [0, n) on up to threads() workers. Work is split
// into contiguous chunks; callers write results into pre-sized slots, so the
// outcome never depends on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lamelab
