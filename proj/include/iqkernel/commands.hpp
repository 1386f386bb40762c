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

#include <json.hpp>

#include "iqkernel/calibrated.hpp"
#include "iqkernel/tensor.hpp"

namespace iqk {

/// Streaming max-abs / MSE / relative-error accumulator.
struct ErrorAccumulator {
  double max_abs = 0.0;
  double sum_sq = 0.0;
  double ref_sq = 0.0;
  std::size_t count = 0;

  void add(std::span<const float> got, std::span<const float> want);
  ErrorStats stats() const;
};

nlohmann::json to_json(const ErrorStats& s);

struct CompareOptions {
  std::vector<std::string> ablate;  // "fsbr", "clipped-softmax", "di-norm"
  std::vector<int> sweep_c;         // clip values for the softmax sweep
  bool trace_float = false;
};

/// Runs float_forward and int_forward over `eval` and builds the error report:
/// end-to-end metrics, per-op metrics at every probe point, the isolated
/// softmax error (integer softmax vs float softmax of the same integer
/// logits), requested ablations and the c sweep.
nlohmann::json compare_report(const CalibratedBlock& cb, const std::vector<FloatTensor>& eval,
                              const CompareOptions& opt);

/// Human-readable tables for a report.
std::string report_markdown(const nlohmann::json& report);

/// Built-in quick checks; returns one line per check.
struct SelftestLine {
  std::string name;
  bool pass = false;
  std::string detail;
};
std::vector<SelftestLine> run_selftest(std::uint64_t seed);

/// Entry point of the `iqkernel` command. Exit codes: 0 success,
/// 2 validation error, 3 numerical diagnostic.
int cli_main(int argc, char** argv);

}  // namespace iqk
