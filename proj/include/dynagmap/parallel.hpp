#pragma once

#include <cstddef>
#include <functional>

namespace dynagmap {

/// Worker count from DYNAGMAP_THREADS (0 or unset = hardware concurrency).
int worker_count();

/// Runs body(i) for i in [0, n). Work items must write disjoint outputs; the
/// result never depends on the number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace dynagmap
