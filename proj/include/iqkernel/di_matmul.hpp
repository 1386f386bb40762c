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
#include <vector>

#include "iqkernel/integer_math.hpp"
#include "iqkernel/quant.hpp"

namespace iqk {

/// Exact integer product with one dyadic scale per row: the real value of
/// element (i, j) is data[i, j] * mantissa[i] / 2^shift[i]. Column scales of a
/// per-channel right operand are aligned into the data, so a row carries a
/// single scale.
struct IntAccumulator {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int64_t> data;
  std::vector<std::uint64_t> mantissa;
  std::vector<std::uint32_t> shift;

  std::int64_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double row_scale(std::size_t r) const;
};

/// Counters reported by the requantization step.
struct DiMatMulInfo {
  std::uint64_t scale_solves = 0;   // closed-form (m, k, zp) solves
  std::uint64_t degenerate = 0;     // groups with p_max == p_min
};

/// P = (X1 - zp1)(X2 - zp2) exactly. Any granularity is accepted: scales
/// along the inner dimension or the output columns are aligned into the
/// integer data so that each output row keeps one dyadic scale.
IntAccumulator int_gemm(const QuantTensor& x1, const QuantTensor& x2);

/// Runtime range discovery and closed-form dyadic requantization of an
/// accumulator, per row (PerToken) or over the whole tensor (PerTensor).
QuantTensor requantize(const IntAccumulator& acc, int out_bits, Granularity granularity,
                       DiMatMulInfo* info = nullptr);

/// Requantization onto fixed per-column parameters (static calibration).
QuantTensor requantize_static(const IntAccumulator& acc, int out_bits,
                              const QuantParams& per_column);

/// Output step for a value range of `range` accumulator units at scale
/// M / 2^K spread over n levels: k from the m = 256 bound (ignoring M), then
/// m = round(range * M / n >> (K - k)) with k stepping down while m > 255.
DyadicScale output_scale(i128 range, std::uint64_t M, std::uint32_t K, std::uint32_t n);

/// Dynamic integer-only matrix multiplication.
QuantTensor di_matmul(const QuantTensor& x1, const QuantTensor& x2, int out_bits,
                      Granularity granularity, DiMatMulInfo* info = nullptr);

/// Re-expresses a quantized tensor as an accumulator on one shift shared by
/// every element (mantissas aligned by left shifts).
IntAccumulator to_accumulator(const QuantTensor& q);

/// Elementwise sum of two accumulators after aligning both to the finer
/// scale of each row; saturates at the int64 range.
IntAccumulator residual_add(const IntAccumulator& a, const IntAccumulator& b);

/// Column-wise concatenation of accumulators that share row scales.
IntAccumulator concat_cols(const std::vector<IntAccumulator>& parts);

/// Columns [begin, end) of a rank-2 tensor, keeping its granularity.
QuantTensor slice_cols(const QuantTensor& q, std::size_t begin, std::size_t end);

/// Float view of an accumulator (boundary use only).
FloatTensor dequantize(const IntAccumulator& acc);

}  // namespace iqk
