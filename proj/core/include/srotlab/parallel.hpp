#pragma once

#include <cstdint>
#include <functional>

namespace srotlab {

/// Number of worker threads implied by a request: 0 -> hardware concurrency.
int resolve_threads(int requested);

/// Runs body(i) for i in [0, count) on `threads` workers. Work items must be
/// independent; results are deterministic as long as each item only writes
/// its own slots.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& body,
                  int threads = 0);

}  // namespace srotlab
