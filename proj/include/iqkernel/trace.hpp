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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Float-op tracing for the integer pipeline. Every library routine that does
// floating-point arithmetic reports itself through IQK_TRACE_FLOAT(name, n);
// inside an IntegerRegion those reports are counted as violations.

namespace iqk::trace {

struct Violation {
  std::string op;
  std::uint64_t count = 0;
};

bool compiled_in();
void enable(bool on);
bool enabled();

void record_float_ops(const char* op, std::uint64_t count);

// Scope between the boundary quantize and the final dequantize.
class IntegerRegion {
 public:
  IntegerRegion();
  ~IntegerRegion();
  IntegerRegion(const IntegerRegion&) = delete;
  IntegerRegion& operator=(const IntegerRegion&) = delete;
};

bool in_integer_region();
std::uint64_t violation_count();
std::vector<Violation> violations();
void reset();

}  // namespace iqk::trace

#if defined(IQKERNEL_TRACE_FLOAT) && IQKERNEL_TRACE_FLOAT
#define IQK_TRACE_FLOAT(op, n) ::iqk::trace::record_float_ops((op), (n))
#else
#define IQK_TRACE_FLOAT(op, n) ((void)0)
#endif
