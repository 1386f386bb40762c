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

#include "iqkernel/toy.hpp"

#include <cmath>
#include <string>

#include "iqkernel/error.hpp"
#include "iqkernel/rng.hpp"
#include "iqkernel/trace.hpp"

namespace iqk {

void ToySpec::validate() const {
  dims.validate();
  require(sequences >= 1 && tokens >= 1, "toy data needs at least one sequence and token");
  for (const auto& o : channel_outliers) {
    require(o.index < dims.d_model, "channel outlier index " + std::to_string(o.index) +
                                        " out of range");
    require(std::isfinite(o.multiplier) && o.multiplier != 0.0f,
            "outlier multiplier must be finite and nonzero");
  }
  for (const auto& o : token_outliers) {
    require(o.index < tokens, "token outlier index " + std::to_string(o.index) +
                                  " out of range");
    require(std::isfinite(o.multiplier) && o.multiplier != 0.0f,
            "outlier multiplier must be finite and nonzero");
  }
}

namespace {

FloatTensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<float> v(rows * cols);
  for (float& e : v) e = static_cast<float>(rng.normal() * sd);
  return FloatTensor({rows, cols}, std::move(v));
}

std::vector<float> random_gamma(Rng& rng, std::size_t n) {
  std::vector<float> g(n);
  for (float& e : g) e = static_cast<float>(1.0 + 0.1 * rng.normal());
  return g;
}

}  // namespace

BlockWeights make_toy_block(const BlockDims& dims, std::uint64_t seed) {
  IQK_TRACE_FLOAT("make_toy_block", 1);
  dims.validate();
  Rng rng(seed);
  BlockWeights w;
  w.dims = dims;
  const std::size_t d = dims.d_model, f = dims.d_ffn;
  w.norm1.gamma = random_gamma(rng, d);
  w.wq = random_matrix(rng, d, d);
  w.wk = random_matrix(rng, d, d);
  w.wv = random_matrix(rng, d, d);
  w.wo = random_matrix(rng, d, d);
  w.norm2.gamma = random_gamma(rng, d);
  w.w_gate = random_matrix(rng, d, f);
  w.w_up = random_matrix(rng, d, f);
  w.w_down = random_matrix(rng, f, d);
  w.swiglu_divisor.assign(f, 1.0f);
  return w;
}

std::vector<FloatTensor> make_toy_data(const ToySpec& spec, std::uint64_t stream) {
  IQK_TRACE_FLOAT("make_toy_data", spec.sequences);
  spec.validate();
  Rng rng(spec.seed * 0x100000001b3ULL + stream + 1);
  const std::size_t d = spec.dims.d_model;
  std::vector<FloatTensor> out;
  out.reserve(spec.sequences);
  for (std::size_t s = 0; s < spec.sequences; ++s) {
    FloatTensor x({spec.tokens, d});
    for (float& e : x.data()) e = static_cast<float>(rng.normal());
    for (const auto& o : spec.channel_outliers)
      for (std::size_t t = 0; t < spec.tokens; ++t) x.at(t, o.index) *= o.multiplier;
    for (const auto& o : spec.token_outliers)
      for (float& e : x.row(o.index)) e *= o.multiplier;
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace iqk
