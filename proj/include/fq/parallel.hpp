#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fq {

// Runs fn(i) for i in [0, n) on up to jobs threads.  Results must be written
// to pre-allocated slots indexed by i so the output is independent of
// scheduling.  The first exception thrown by any task is rethrown.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (jobs <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  jobs = std::min(jobs, n);
  std::vector<std::thread> pool;
  std::mutex mu;
  std::exception_ptr first_error;
  std::size_t next = 0;
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= n || first_error) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fq
