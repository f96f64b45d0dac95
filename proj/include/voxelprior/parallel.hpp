#pragma once

#include <cstddef>
#include <functional>

namespace voxelprior {

// Worker count used by parallel_for; 1 runs everything inline.
void set_thread_count(std::size_t n);
std::size_t thread_count() noexcept;

// Calls fn(i) for i in [0, n). Iterations are split into contiguous chunks;
// callers write results into per-index slots and reduce afterwards, so the
// outcome does not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace voxelprior
