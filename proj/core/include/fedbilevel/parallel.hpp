// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_PARALLEL_HPP_
#define FEDBILEVEL_PARALLEL_HPP_

#include <functional>

namespace fedbilevel {

// Worker cap from FEDBILEVEL_THREADS (default 1, i.e. fully sequential).
int worker_count();

// Runs fn(0), ..., fn(n-1), possibly concurrently.  Every index is handled
// exactly once; bodies must not share mutable state across indices, which
// keeps results identical to the sequential order.  The first exception
// thrown by a body is rethrown after all workers finish.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_PARALLEL_HPP_
