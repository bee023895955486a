#pragma once

#include <cstddef>
#include <functional>

namespace entfact {

// Worker count from ENTFACT_THREADS, defaulting to the logical core count.
std::size_t thread_count();

// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
// write results into pre-sized slots so the output order never depends on
// scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace entfact
