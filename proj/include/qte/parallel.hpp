#pragma once

#include <cstddef>
#include <functional>

namespace qte {

// Worker count from QTE_THREADS, else hardware concurrency (at least 1).
unsigned default_thread_count();

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
// processed exactly once; the first exception thrown by any worker is
// rethrown after all workers join.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace qte
