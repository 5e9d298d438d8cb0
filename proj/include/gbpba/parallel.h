/******************************************************************************
 * Copyright 2026 The gbpba Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/
#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace gbpba {

/// Runs fn(i) for i in [0, n) on up to `workers` threads with a static
/// contiguous partition. Returns after every item has finished (a barrier).
/// fn must only write state owned by item i.
template <class Fn>
void parallel_for(size_t n, int workers, Fn&& fn) {
  const size_t w = std::min<size_t>(static_cast<size_t>(std::max(workers, 1)), n);
  if (w <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const size_t chunk = (n + w - 1) / w;
  auto run = [&fn, chunk, n](size_t t) {
    const size_t end = std::min(n, (t + 1) * chunk);
    for (size_t i = t * chunk; i < end; ++i) fn(i);
  };
  std::vector<std::jthread> threads;
  threads.reserve(w - 1);
  for (size_t t = 1; t < w; ++t) threads.emplace_back(run, t);
  run(0);
}

}  // namespace gbpba
