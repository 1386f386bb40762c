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
#include <map>
#include <string>
#include <vector>

#include "iqkernel/block.hpp"
#include "iqkernel/di_matmul.hpp"
#include "iqkernel/di_nonlinear.hpp"
#include "iqkernel/fsbr.hpp"
#include "iqkernel/quant.hpp"

namespace iqk {

/// Per-channel float range observed on calibration data.
struct ChannelRange {
  std::vector<float> lo, hi;
};

/// Integer-ready block: smoothing folded, weights quantized per output
/// channel, static per-channel 8-bit parameters for both norm inputs.
struct CalibratedBlock {
  QConfig qconfig;
  ClipConfig clip;
  BlockWeights reference;  // float weights before smoothing
  SmoothingSet smoothing;
  ChannelRange norm1_range, norm2_range;

  // Derived by build_calibrated.
  BlockWeights folded;
  QuantTensor wq, wk, wv, wo, w_gate, w_up, w_down;  // wq carries 1/sqrt(d_head)
  IntNormParams norm1, norm2;
  SmoothDivisor swiglu;
  QuantParams norm1_input, norm2_input;

  // Reconstruction record.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t steps_run = 0;
  std::uint64_t seed = 0;
};

/// Residual-stream ranges (block input and post-attention residual) over a
/// calibration set. They do not depend on smoothing.
void measure_norm_ranges(const BlockWeights& w, const std::vector<FloatTensor>& calib,
                         ChannelRange& norm1, ChannelRange& norm2);

/// Folds the smoothing and quantizes everything the integer path needs.
CalibratedBlock build_calibrated(const BlockWeights& reference, const SmoothingSet& smoothing,
                                 const QConfig& q, const ClipConfig& clip,
                                 const ChannelRange& norm1_range,
                                 const ChannelRange& norm2_range);

/// FSBR (unless `fsbr` is false), range measurement and quantization.
CalibratedBlock calibrate(const BlockWeights& block, const std::vector<FloatTensor>& calib,
                          const QConfig& q, const ReconstructionConfig& rcfg,
                          const ClipConfig& clip = {}, bool fsbr = true);

/// Quantized intermediates captured by int_forward, per probe point.
struct IntProbe {
  std::map<std::string, std::vector<QuantTensor>> taps;
  std::vector<IntAccumulator> logits;  // per head, before the softmax
  FloatProbe dequantized() const;  // stacks multiple tensors by rows
};

struct IntForwardOptions {
  bool clip = true;                    // false: softmax over the full row range
  bool per_channel_norm_input = true;  // false: per-token dynamic norm inputs
  IntProbe* probe = nullptr;
};

/// Integer-only forward. Quantizes x once at the boundary, runs DI-MatMul,
/// DI-ClippedSoftmax, DI-RMSnorm and DI-SwiGLU, and dequantizes the final
/// residual. Inside runs a trace::IntegerRegion.
FloatTensor int_forward(const CalibratedBlock& cb, const FloatTensor& x,
                        const IntForwardOptions& opt = {});

}  // namespace iqk
