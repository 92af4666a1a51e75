#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace explain {

// Runs fn(i) for i in [0, n) across up to `workers` threads with static
// chunking. Tasks must write to disjoint slots; outputs are then identical
// for any worker count.
inline void parallel_for(std::size_t n, int workers,
                         const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t n_threads = std::min<std::size_t>(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t] {
      const std::size_t lo = n * t / n_threads;
      const std::size_t hi = n * (t + 1) / n_threads;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace explain
