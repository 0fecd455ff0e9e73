#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace m2d {

/// Worker cap: M2D_THREADS when set, else hardware concurrency.
inline int max_threads() {
  if (const char* env = std::getenv("M2D_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Index-parallel loop over [0, n). Work items must be independent;
/// the first exception thrown by a worker is rethrown on the caller.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int nt = std::min(max_threads(), n);
  if (nt <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(nt);
  for (int t = 0; t < nt; ++t)
    workers.emplace_back([&] {
      for (int i; (i = next.fetch_add(1, std::memory_order_relaxed)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace m2d
