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

#include "iqkernel/block.hpp"
#include "iqkernel/di_nonlinear.hpp"
#include "iqkernel/tensor.hpp"

namespace iqk {

/// The four smoothing paradigms.
enum class Paradigm {
  SerialLinearNorm,      // norm -> linear(s): gamma / s, weight rows * s
  SerialLinearLinear,    // linear -> linear: producer cols / s, consumer rows * s
  ParallelLinearLinear,  // two linears whose outputs meet in a product: cols * s, cols / s
  NonLinearActSmooth,    // SwiGLU: W * s, V / s, sigmoid argument / s
};

const char* paradigm_name(Paradigm p);
Paradigm parse_paradigm(const std::string& s);

/// Per-channel positive factors for one smoothing site.
struct SmoothingVector {
  std::string site;
  Paradigm paradigm = Paradigm::SerialLinearNorm;
  std::vector<float> s;

  void validate() const;
};

using SmoothingSet = std::vector<SmoothingVector>;

// ---- Folds (float-exact reparameterizations) -------------------------------

struct NormFold {
  NormParams norm;
  std::vector<FloatTensor> next;
};
/// gamma' = gamma / s (and beta' = beta / s); every consumer's rows * s.
NormFold fold_serial_linear_norm(const NormParams& norm, const std::vector<FloatTensor>& next,
                                 const SmoothingVector& s);

struct LinearLinearFold {
  FloatTensor w1, b1, w2;
};
/// W1' = W1 / s (columns), b1' = b1 / s, W2' = s * W2 (rows). b1 may be empty.
LinearLinearFold fold_serial_linear_linear(const FloatTensor& w1, const FloatTensor& b1,
                                           const FloatTensor& w2, const SmoothingVector& s);

struct ParallelFold {
  FloatTensor w_a, w_b;
};
/// Two linears fed the same input whose outputs are multiplied channel by
/// channel and summed (query/key): W_a' columns * s, W_b' columns / s.
ParallelFold fold_parallel_linear_linear(const FloatTensor& w_a, const FloatTensor& w_b,
                                         const SmoothingVector& s);

struct SwigluFold {
  FloatTensor w, v, b, c;
  std::vector<float> sigma_divisor;  // sigma'(x) = sigma(x / s)
};
/// W' = W * s, b' = b * s, V' = V / s, c' = c / s (columns); the sigmoid
/// argument is divided by s. b and c may be empty.
SwigluFold fold_swiglu_nonlinear(const FloatTensor& w, const FloatTensor& v,
                                 const FloatTensor& b, const FloatTensor& c,
                                 const SmoothingVector& s);

// ---- Sites of the toy block ------------------------------------------------

/// Every feasible site of the block, all factors 1.
SmoothingSet identity_smoothing(const BlockDims& dims);

/// Folds every vector of the set into a copy of the weights. Sites commute.
BlockWeights apply_smoothing(const BlockWeights& w, const SmoothingSet& set);

/// Equalizer s = (absmax_act / absmax_weight)^alpha per site, measured on the
/// calibration set (alpha = 1/2 balances both sides).
SmoothingSet absmax_smoothing(const BlockWeights& w, const std::vector<FloatTensor>& calib,
                              float alpha = 0.5f, float s_min = 1e-2f, float s_max = 1e2f);

// ---- Reconstruction --------------------------------------------------------

struct ReconstructionConfig {
  std::size_t samples = 128;       // calibration sequences used
  double learning_rate = 5e-3;     // Adam step on log s
  std::size_t steps = 200;
  double epsilon_fd = 1e-2;        // finite-difference step on log s
  std::size_t batch = 16;          // sequences per gradient estimate
  double early_stop = 1e-6;        // relative loss change
  bool softmax_unquantized = true;
  bool warm_start = false;         // absmax equalizer instead of s = 1, with a
                                   // per-site exponent picked by loss
  double s_min = 1e-2, s_max = 1e2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ReconstructionResult {
  SmoothingSet smoothing;
  double initial_loss = 0.0;  // s = 1
  double final_loss = 0.0;    // returned smoothing, never above initial
  double learned_loss = 0.0;  // optimizer output before the fallback
  std::size_t steps_run = 0;
  std::vector<float> warm_alpha;              // per-site exponent when warm-started
  std::vector<std::string> reset_sites;  // sites that fell back to identity
};

/// Mean squared error between the simulated-quantization block and the float
/// block over the calibration sequences.
double reconstruction_loss(const BlockWeights& reference, const SmoothingSet& set,
                           const std::vector<FloatTensor>& calib,
                           const std::vector<FloatTensor>& targets, const QConfig& q);

/// Learns per-site smoothing vectors by finite-difference descent on log s.
ReconstructionResult fsbr_reconstruct(const BlockWeights& block,
                                      const std::vector<FloatTensor>& calib,
                                      const QConfig& q, const ReconstructionConfig& cfg);

}  // namespace iqk
