#pragma once

#include <cstddef>
#include <functional>

namespace partseg {

/// Process-wide worker cap used when a call passes threads <= 0.
void set_default_threads(int n);
int default_threads();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must not
/// depend on scheduling; the first exception thrown by any task is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace partseg
