#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cdbandit {

/// Calls fn(i) for i in [begin, end) on up to `workers` threads. Each index is
/// processed exactly once; callers write results by index and reduce
/// afterwards, so the outcome never depends on the worker count. The first
/// exception thrown by any call is rethrown.
template <class Fn>
void parallel_for(std::int64_t begin, std::int64_t end, int workers, Fn&& fn) {
  const std::int64_t n = end - begin;
  if (n <= 0) return;
  const auto threads = static_cast<std::int64_t>(std::max(1, workers));
  if (threads == 1 || n == 1) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const auto used = std::min(threads, n);
  pool.reserve(static_cast<std::size_t>(used));
  for (std::int64_t w = 0; w < used; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::int64_t i = begin + w; i < end; i += used) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace cdbandit
