#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace qmeas {

// Worker count resolution: explicit request > QMEAS_THREADS > hardware.
inline int resolve_thread_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("QMEAS_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, n). Work items are handed out dynamically but each
// writes only to its own slot, so results do not depend on scheduling.
inline void parallel_for(std::int64_t n, int n_threads,
                         const std::function<void(std::int64_t)>& fn) {
  n_threads = resolve_thread_count(n_threads);
  if (n <= 0) return;
  if (n_threads <= 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;

  auto worker = [&]() {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::int64_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        bool expected = false;
        if (failed.compare_exchange_strong(expected, true)) {
          error = std::current_exception();
        }
        break;
      }
    }
  };

  std::vector<std::thread> pool;
  const int n_workers = static_cast<int>(std::min<std::int64_t>(n_threads, n));
  pool.reserve(n_workers);
  for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace qmeas
