#pragma once

#include <cstddef>
#include <functional>

namespace slva {

/// Worker count: the SLVA_THREADS environment variable when set to a positive
/// integer, otherwise std::thread::hardware_concurrency() (at least 1).
int default_thread_count();

/// Runs body(i) for i in [0, count) on up to `threads` workers. Iterations are
/// handed out dynamically; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body, int threads);

}  // namespace slva
