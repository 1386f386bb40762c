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

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "iqkernel/di_nonlinear.hpp"
#include "iqkernel/quant.hpp"
#include "iqkernel/tensor.hpp"

namespace iqk {

struct BlockDims {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ffn = 172;

  std::size_t head_dim() const { return d_model / n_heads; }
  void validate() const;
};

/// Float parameters of a LLaMA-style block. Linear weights are stored
/// [in, out] and the block has no biases. `swiglu_divisor` is the per-channel
/// divisor inside the sigmoid (all ones until a NonLinearActSmooth fold).
struct BlockWeights {
  BlockDims dims;
  NormParams norm1, norm2;
  FloatTensor wq, wk, wv, wo;
  FloatTensor w_gate, w_up, w_down;
  std::vector<float> swiglu_divisor;

  void validate() const;
};

/// Bit-widths of a WnAm configuration. Nonlinear-op outputs (softmax, gate,
/// up, projection outputs feeding residuals) stay at 8 bits.
struct QConfig {
  int wbits = 8;
  int abits = 8;
  Granularity act_granularity = Granularity::PerToken;

  std::string name() const;  // e.g. "W4A4"
  void validate() const;
};

/// Named intermediate tensors captured during a forward pass. Attention
/// probabilities are stacked head by head into [heads * tokens, tokens].
using FloatProbe = std::map<std::string, FloatTensor>;

/// Names of the probe points, in pipeline order.
const std::vector<std::string>& probe_points();

/// Reference float forward: RMSNorm, causal multi-head attention with
/// 1/sqrt(d_head) scaling, output projection, residual, RMSNorm, SwiGLU FFN,
/// residual. x is [tokens, d_model].
FloatTensor float_forward(const BlockWeights& w, const FloatTensor& x,
                          FloatProbe* probe = nullptr);

/// Simulated quantization of the same pipeline: weights are fake-quantized
/// per output channel at wbits, activations at the points where the integer
/// pipeline requantizes. The softmax input stays unquantized.
FloatTensor sim_forward(const BlockWeights& w, const FloatTensor& x, const QConfig& q);

/// Weights fake-quantized per output channel; the result feeds
/// sim_forward_prequantized so repeated passes skip the weight work.
BlockWeights fake_quantize_weights(const BlockWeights& w, int wbits);
FloatTensor sim_forward_prequantized(const BlockWeights& wq, const FloatTensor& x,
                                     const QConfig& q, bool quantize_softmax_input = false);

/// Row-wise softmax in double precision; with `causal`, row i sees columns
/// j <= i + (cols - rows).
FloatTensor float_softmax(const FloatTensor& scores, bool causal);

/// dequantize(quantize(x)) at the given granularity.
FloatTensor fake_quant(const FloatTensor& x, int bits, Granularity g);

}  // namespace iqk
