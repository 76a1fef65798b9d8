#pragma once

#include <cstddef>
#include <functional>

namespace homlab {

/// Worker count: HOMLAB_WORKERS if set and positive, else the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = worker_count()).
/// Jobs are handed out dynamically; callers store results by index so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t workers = 0);

}  // namespace homlab
