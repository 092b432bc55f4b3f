#pragma once

#include <cstdint>
#include <functional>

namespace steinflow {

// Worker count: min(STEINFLOW_THREADS, hardware concurrency), at least 1.
int worker_count();

// Runs body(i) for i in [0, n). Indices are statically partitioned across
// workers; each index must write only its own output slot, so results do
// not depend on the worker count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body);

}  // namespace steinflow
