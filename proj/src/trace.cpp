// Copyright 2026 The iqkernel Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iqkernel/trace.hpp"

#include <atomic>
#include <map>
#include <mutex>

namespace iqk::trace {
namespace {

std::atomic<bool> g_enabled{false};
thread_local int t_region_depth = 0;

std::mutex g_mu;
std::map<std::string, std::uint64_t> g_counts;
std::atomic<std::uint64_t> g_total{0};

}  // namespace

bool compiled_in() {
#if defined(IQKERNEL_TRACE_FLOAT) && IQKERNEL_TRACE_FLOAT
  return true;
#else
  return false;
#endif
}

void enable(bool on) { g_enabled.store(on); }
bool enabled() { return g_enabled.load(); }

void record_float_ops(const char* op, std::uint64_t count) {
  if (t_region_depth == 0 || !g_enabled.load(std::memory_order_relaxed)) {
    return;
  }
  g_total.fetch_add(count);
  std::lock_guard<std::mutex> lock(g_mu);
  g_counts[op] += count;
}

IntegerRegion::IntegerRegion() { ++t_region_depth; }
IntegerRegion::~IntegerRegion() { --t_region_depth; }

bool in_integer_region() { return t_region_depth > 0; }

std::uint64_t violation_count() { return g_total.load(); }

std::vector<Violation> violations() {
  std::lock_guard<std::mutex> lock(g_mu);
  std::vector<Violation> out;
  for (const auto& [op, n] : g_counts) out.push_back({op, n});
  return out;
}

void reset() {
  std::lock_guard<std::mutex> lock(g_mu);
  g_counts.clear();
  g_total.store(0);
}

}  // namespace iqk::trace
