#pragma once

#include <cstddef>
#include <functional>

namespace laminar {

/// Number of worker threads used by voxel-parallel loops. Results never depend
/// on this value; only wall time does.
void set_worker_count(int workers);
int worker_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Each chunk writes
/// only to its own outputs, so the result is independent of the split.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace laminar
