// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace decaylens {

// Worker budget: DECAYLENS_THREADS if set (>=1), else hardware concurrency.
int thread_budget();

// Splits [0, n) into contiguous chunks, one worker thread each. The callable
// receives [begin, end). Exceptions from workers are rethrown on the caller.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

// Runs `jobs` callables with at most thread_budget() in flight.
void parallel_jobs(const std::vector<std::function<void()>>& jobs);

}  // namespace decaylens
