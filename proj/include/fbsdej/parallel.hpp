#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fbsdej {

/// Worker count: FBSDEJ_THREADS when set and positive, otherwise the hardware
/// concurrency. `set_thread_count` overrides both (0 restores the default).
int thread_count();
void set_thread_count(int threads);

namespace detail {
// Set inside worker bodies so nested parallel_for calls run inline.
inline thread_local bool in_parallel_region = false;
}

/// Runs body(begin, end) over [0, count) in fixed chunks of `grain`. Chunk
/// boundaries depend only on (count, grain), never on the number of workers,
/// so any body that writes disjoint outputs per index is deterministic.
template <class Body>
void parallel_for(std::size_t count, std::size_t grain, Body&& body, int threads = 0) {
  if (count == 0) return;
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = (count + grain - 1) / grain;
  int workers = threads > 0 ? threads : thread_count();
  workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), chunks));
  if (detail::in_parallel_region) workers = 1;
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      body(c * grain, std::min(count, (c + 1) * grain));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::size_t failed_chunk = chunks;
  std::mutex failure_mutex;
  auto run = [&] {
    const bool outer = detail::in_parallel_region;
    detail::in_parallel_region = true;
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) break;
      try {
        body(c * grain, std::min(count, (c + 1) * grain));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        // Keep the lowest failing chunk so the reported error does not depend
        // on scheduling.
        if (c < failed_chunk) {
          failed_chunk = c;
          failure = std::current_exception();
        }
      }
    }
    detail::in_parallel_region = outer;
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace fbsdej
