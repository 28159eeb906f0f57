// SPDX-License-Identifier: Apache-2.0
#include "decaylens/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace decaylens {

int thread_budget() {
  if (const char* env = std::getenv("DECAYLENS_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) {
      return v;
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) {
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_budget()), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> threads;
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) {
      break;
    }
    threads.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        if (!failed.exchange(true)) {
          error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) {
    t.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

void parallel_jobs(const std::vector<std::function<void()>>& jobs) {
  std::atomic<std::size_t> next{0};
  parallel_chunks(jobs.size(), [&](std::size_t, std::size_t) {
    for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      jobs[i]();
    }
  });
}

}  // namespace decaylens
