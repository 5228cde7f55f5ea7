#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace gimkit {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs fn(i) for i in [0, count).  Work unit i must depend only on i (each
/// unit derives its own RNG substream), so the outcome is identical for any
/// thread count.  The first exception thrown by a worker is rethrown.
inline void parallel_for(long long count, const std::function<void(long long)>& fn,
                         int threads = 0) {
  const int t = std::min<long long>(resolve_threads(threads), count > 0 ? count : 1);
  if (t <= 1) {
    for (long long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (int k = 0; k < t; ++k) {
    pool.emplace_back([&, k]() {
      try {
        for (long long i = k; i < count; i += t) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace gimkit
