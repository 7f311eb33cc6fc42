#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fmedreg {

/// Worker count: FMEDREG_THREADS if set and positive, else the number of
/// logical cores.
inline std::size_t thread_count() {
  if (const char* env = std::getenv("FMEDREG_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}  // namespace detail

/// Runs fn(i) for i in [0, n); nested calls run serially. Each index is
/// handled exactly once, so callers that write only to slot i get
/// schedule-independent results.
/// The first exception thrown by any task is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t threads = 0) {
  if (threads == 0) threads = thread_count();
  threads = std::min(threads, n);
  if (detail::in_parallel_region) threads = 1;
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    const bool outer = detail::in_parallel_region;
    detail::in_parallel_region = true;
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
    detail::in_parallel_region = outer;
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace fmedreg
