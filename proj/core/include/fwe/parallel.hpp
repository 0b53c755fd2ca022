#pragma once

#include <cstddef>
#include <functional>

namespace fwe {

/// Runs fn(index, worker) for index in [0, n) on up to `threads` workers.
/// Work is handed out by an atomic counter; callers must write results by
/// index so output never depends on scheduling. The first exception thrown
/// by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t index, unsigned worker)>& fn);

/// Number of workers parallel_for will actually start for (n, threads).
[[nodiscard]] unsigned effective_workers(std::size_t n, unsigned threads) noexcept;

}  // namespace fwe
