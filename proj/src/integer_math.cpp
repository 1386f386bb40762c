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

#include "iqkernel/integer_math.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "iqkernel/error.hpp"
#include "iqkernel/trace.hpp"

namespace iqk {

double DyadicScale::value() const {
  return std::ldexp(static_cast<double>(m), -static_cast<int>(k));
}

std::int64_t round_div(std::int64_t num, std::int64_t den) {
  return static_cast<std::int64_t>(round_div(static_cast<i128>(num),
                                             static_cast<i128>(den)));
}

i128 round_div(i128 num, i128 den) {
  if (den <= 0) throw ValidationError("round_div: denominator must be > 0");
  const i128 mag = num < 0 ? -num : num;
  const i128 q = (2 * mag + den) / (2 * den);
  return num < 0 ? -q : q;
}

std::uint32_t floor_log2(std::uint64_t n) {
  if (n == 0) throw ValidationError("floor_log2: undefined for 0");
  return 63u - static_cast<std::uint32_t>(std::countl_zero(n));
}

std::uint32_t floor_log2_wide(u128 n) {
  if (n == 0) throw ValidationError("floor_log2: undefined for 0");
  const auto hi = static_cast<std::uint64_t>(n >> 64);
  if (hi != 0) return 64u + floor_log2(hi);
  return floor_log2(static_cast<std::uint64_t>(n));
}

DyadicScale fit_dyadic_wide(u128 numerator, u128 denominator) {
  if (denominator == 0) throw ValidationError("fit_dyadic: zero denominator");
  if (numerator == 0) return {0, 0};
  // Above 255 + 1/2 no (m, 0) rounds into range.
  if (numerator > 255 * denominator + denominator / 2) {
    throw NumericalError("fit_dyadic: target exceeds 255");
  }
  // Bounded shifts: numerator * 2^k <= 256 * denominator < 2^128 needs
  // denominator < 2^120, which every caller satisfies.
  if ((denominator >> 119) != 0) {
    throw NumericalError("fit_dyadic: denominator too wide");
  }
  const u128 ratio = (denominator << 8) / numerator;  // >= 1 here
  std::int64_t k = floor_log2_wide(ratio);
  if (k > 255) {
    // Tiny target: best effort at the largest shift.
    k = 255;
  }
  for (;;) {
    if (k < 0) throw NumericalError("fit_dyadic: target exceeds 255");
    u128 m = 0;
    if (k <= 120) {
      const u128 num = numerator << k;
      m = (2 * num + denominator) / (2 * denominator);
    }
    if (m <= 255) return {static_cast<std::uint32_t>(m),
                          static_cast<std::uint32_t>(k)};
    --k;
  }
}

DyadicScale fit_dyadic(std::uint64_t numerator, std::uint64_t denominator) {
  return fit_dyadic_wide(numerator, denominator);
}

DyadicScale fit_dyadic(double s) {
  IQK_TRACE_FLOAT("fit_dyadic(double)", 4);
  if (!(s >= 0.0) || !std::isfinite(s)) {
    throw ValidationError("fit_dyadic: scale must be finite and >= 0");
  }
  if (s == 0.0) return {0, 0};
  if (s > 255.5) throw NumericalError("fit_dyadic: target exceeds 255");
  int k = static_cast<int>(std::floor(std::log2(256.0 / s)));
  if (k > 255) k = 255;
  for (;;) {
    const double m = std::round(std::ldexp(s, k));
    if (m <= 255.0 || k == 0) {
      if (m > 255.0) throw NumericalError("fit_dyadic: target exceeds 255");
      return {static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(k)};
    }
    --k;
  }
}

DyadicScale fit_dyadic_ceil(double s) {
  IQK_TRACE_FLOAT("fit_dyadic_ceil", 4);
  if (!(s >= 0.0) || !std::isfinite(s)) {
    throw ValidationError("fit_dyadic: scale must be finite and >= 0");
  }
  if (s == 0.0) return {0, 0};
  if (s > 255.0) throw NumericalError("fit_dyadic: target exceeds 255");
  int k = static_cast<int>(std::floor(std::log2(256.0 / s)));
  if (k > 255) k = 255;
  for (;;) {
    const double m = std::ceil(std::ldexp(s, k));
    if (m <= 255.0) {
      return {static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(k)};
    }
    if (k == 0) throw NumericalError("fit_dyadic: target exceeds 255");
    --k;
  }
}

std::uint64_t i_sqrt(std::uint64_t n) {
  // Same loop as the 16-iteration 32-bit version with v starting at 31:
  // candidate bit b is accepted when (2 * root + b) * b fits in the rest.
  std::uint64_t root = 0;
  std::uint64_t bit = std::uint64_t{1} << 31;
  int v = 31;
  while (bit != 0) {
    const u128 temp = (static_cast<u128>((root << 1) + bit)) << v--;
    if (n >= temp) {
      root += bit;
      n -= static_cast<std::uint64_t>(temp);
    }
    bit >>= 1;
  }
  return root;
}

std::uint64_t int_div(std::uint64_t a, std::uint64_t b, std::uint32_t p) {
  if (b == 0) throw ValidationError("int_div: division by zero");
  if (a > b) throw ValidationError("int_div: ratio above 1");
  if (p < 2 || p > 16) throw ValidationError("int_div: p must be in [2, 16]");
  const u128 num = static_cast<u128>(a) << (p - 1);
  return static_cast<std::uint64_t>((2 * num + b) / (2 * static_cast<u128>(b)));
}

DiExpParams di_exp_params(DyadicScale scale) {
  if (scale.m == 0) throw ValidationError("di_exp: scale mantissa is 0");
  if (scale.k > 120) {
    throw NumericalError("di_exp: shift k=" + std::to_string(scale.k) +
                         " too large");
  }
  // m * log2(e) with log2(e) ~ 1 + 1/2 - 1/16.
  const std::int64_t mf = static_cast<std::int64_t>(scale.m) +
                          (scale.m >> 1) - (scale.m >> 4);
  const i128 t = -round_div(static_cast<i128>(1) << scale.k, static_cast<i128>(mf));
  if (t == 0) {
    throw NumericalError("di_exp: step rounds to 0 (scale too coarse, m=" +
                         std::to_string(scale.m) + " k=" +
                         std::to_string(scale.k) + ")");
  }
  if (t < -(static_cast<i128>(1) << 31)) {
    throw NumericalError("di_exp: period overflows 32 bits (m=" +
                         std::to_string(scale.m) + " k=" +
                         std::to_string(scale.k) + ")");
  }
  return {static_cast<std::int64_t>(t)};
}

namespace {

// floor(a / b) for b < 0 and a <= 0.
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Arithmetic shift right as floor division by 2.
std::int64_t shr1(std::int64_t r) { return floor_div(r, 2) ; }

}  // namespace

std::int64_t di_exp(std::int64_t x, const DiExpParams& params) {
  if (x > 0) throw ValidationError("di_exp: input must be <= 0");
  const std::int64_t t = params.t;
  const std::int64_t q = floor_div(x, t);
  const std::int64_t r = x - q * t;  // in (t, 0]
  const std::int64_t unshifted = shr1(r) - t;
  if (q >= 63) return 0;
  return unshifted >> q;
}

DyExpOutput di_exp(std::span<const std::int64_t> x, DyadicScale scale) {
  const DiExpParams params = di_exp_params(scale);
  DyExpOutput out;
  out.unit = params.unit();
  out.values.reserve(x.size());
  for (std::int64_t v : x) out.values.push_back(di_exp(v, params));
  return out;
}

}  // namespace iqk
