#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace membrane {

// Number of worker threads: MEMBRANE_LAB_THREADS when set to a positive
// integer, otherwise the hardware concurrency (at least 1).
inline int worker_count() {
  if (const char* env = std::getenv("MEMBRANE_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs task(i) for i in [0, count) on `workers` threads (0 means
// worker_count()).  Tasks are claimed via an atomic counter; callers that need
// reproducible results must write into disjoint slots indexed by i and reduce
// in index order afterwards.  The first exception thrown by any task is
// rethrown after all threads join.
inline void parallel_replicas(int count, int workers,
                              const std::function<void(int)>& task) {
  if (count <= 0) return;
  if (workers <= 0) workers = worker_count();
  if (workers > count) workers = count;
  if (workers == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr err;
  std::mutex err_mu;
  auto body = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace membrane
