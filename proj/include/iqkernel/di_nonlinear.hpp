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

#include "iqkernel/di_matmul.hpp"
#include "iqkernel/quant.hpp"

namespace iqk {

/// Clipping bound c = c_m / 2^c_k in real logit units. Disabled clipping keeps
/// the full row range (ablation only).
struct ClipConfig {
  std::uint32_t c_m = 15;
  std::uint32_t c_k = 0;
  bool enabled = true;

  double value() const;
  static ClipConfig from_int(std::int64_t c);
};

/// Softmax over each row of an accumulator of attention logits. Per row the
/// range below the maximum is clipped to c, the row is requantized to 8 bits,
/// exponentiated by DI-Exp and normalized with int_div. Output scale is
/// (m = 1, k = out_bits - 1), zero-point 0. With `causal`, column j > row i
/// (offset by cols - rows) contributes nothing.
QuantTensor di_clipped_softmax(const IntAccumulator& logits, const ClipConfig& clip,
                               int out_bits = 8, bool causal = false);
QuantTensor di_clipped_softmax(const QuantTensor& logits, const ClipConfig& clip,
                               int out_bits = 8, bool causal = false);

/// Float norm parameters. beta is empty for RMSNorm.
struct NormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
};

/// Integer form of NormParams, prepared offline: gamma = g / 2^g_shift with
/// |g| < 2^15, beta = b / 2^16.
struct IntNormParams {
  std::vector<std::int32_t> g;
  std::uint32_t g_shift = 0;
  std::vector<std::int64_t> b;

  static constexpr std::uint32_t kBetaShift = 16;
  static IntNormParams from(const NormParams& p);
};

/// Integer RMSNorm of a per-channel quantized input; output is requantized
/// per token to out_bits. An all-zero token yields zeros.
QuantTensor di_rmsnorm(const QuantTensor& x, const IntNormParams& params, int out_bits);

/// LayerNorm: integer mean subtraction, the RMSNorm pipeline, then beta.
QuantTensor di_layernorm(const QuantTensor& x, const IntNormParams& params, int out_bits);

/// Smoothing divisors of the SwiGLU gate in 16-bit fixed point, alpha = s * 2^16.
struct SmoothDivisor {
  std::vector<std::uint32_t> alpha;

  static constexpr std::uint32_t kShift = 16;
  static SmoothDivisor from(const std::vector<float>& s);
  static SmoothDivisor identity(std::size_t n);
};

/// Integer sigmoid of x * m / 2^k as a fixed-point ratio with scale
/// 1 / 2^(ratio_bits - 1), from two DI-Exp evaluations.
std::vector<std::uint32_t> di_sigmoid(std::span<const std::int64_t> x, DyadicScale scale,
                                      std::uint32_t ratio_bits = 8);

/// SiLU(gate) * up where the sigmoid sees gate / s. Gate and up are per-token
/// or per-tensor quantized; the output is requantized per token.
QuantTensor di_swiglu(const QuantTensor& gate, const QuantTensor& up,
                      const SmoothDivisor& smooth, int out_bits);

}  // namespace iqk
