#pragma once

#include <cstddef>
#include <functional>

namespace agp {

// Worker count used by matmul/sdmm. Defaults to 1.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Splits [0, n) into contiguous chunks, one per worker. Each index is visited
// by exactly one worker, so kernels that write disjoint outputs per index stay
// bitwise reproducible for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace agp
