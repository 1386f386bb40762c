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
#include <span>
#include <vector>

namespace iqk {

/// A quantization step held as m / 2^k with 8-bit m and k. This is the only
/// form a scale takes inside the integer pipeline.
struct DyadicScale {
  std::uint32_t m = 0;
  std::uint32_t k = 0;

  double value() const;
  bool degenerate() const { return m == 0; }
  friend bool operator==(const DyadicScale&, const DyadicScale&) = default;
};

using i128 = __int128;
using u128 = unsigned __int128;

// Round-half-away-from-zero of num / den, den > 0.
std::int64_t round_div(std::int64_t num, std::int64_t den);
i128 round_div(i128 num, i128 den);

/// Best (m, k) in [0,255]^2 for numerator / denominator: k is fixed by
/// pretending m = 256, then m is rounded; m == 256 drops k by one.
/// numerator == 0 gives (0, 0). Targets above 255 throw NumericalError.
DyadicScale fit_dyadic(std::uint64_t numerator, std::uint64_t denominator);
DyadicScale fit_dyadic_wide(u128 numerator, u128 denominator);

// Float-target variants used by offline quantization (not the integer path).
// fit_dyadic_ceil returns the smallest dyadic >= s with m in [128, 255].
DyadicScale fit_dyadic(double s);
DyadicScale fit_dyadic_ceil(double s);

/// Index of the most significant set bit. Throws on 0.
std::uint32_t floor_log2(std::uint64_t n);
std::uint32_t floor_log2_wide(u128 n);

/// floor(sqrt(n)) by the bit-by-bit check: 32 iterations cover 64-bit input.
std::uint64_t i_sqrt(std::uint64_t n);

/// round(a * 2^(p-1) / b): a ratio in [0, 1] as fixed point with m = 1,
/// k = p - 1. Requires 0 <= a <= b, b > 0 and p in [2, 16].
std::uint64_t int_div(std::uint64_t a, std::uint64_t b, std::uint32_t p);

// Constants shared by a DI-Exp call: t is the negative integer period of one
// halving, so every value is proportional to e^{x s} with constant |t|.
struct DiExpParams {
  std::int64_t t = 0;
  std::int64_t unit() const { return -t; }  // the value at x = 0
};

DiExpParams di_exp_params(DyadicScale scale);

/// Shift-only exponential of one non-positive integer.
std::int64_t di_exp(std::int64_t x, const DiExpParams& params);

/// Vector form; values are proportional to e^{x_i * m / 2^k} with one
/// constant (|t|, see DyExpOutput::unit) for the whole call.
struct DyExpOutput {
  std::vector<std::int64_t> values;
  std::int64_t unit = 0;
};
DyExpOutput di_exp(std::span<const std::int64_t> x, DyadicScale scale);

}  // namespace iqk
