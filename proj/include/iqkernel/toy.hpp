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

#include "iqkernel/block.hpp"
#include "iqkernel/tensor.hpp"

namespace iqk {

struct Outlier {
  std::size_t index = 0;
  float multiplier = 1.0f;
};

/// Synthetic block and data. Weights are N(0, 1/fan_in), gammas 1 + N(0, 0.1^2);
/// calibration tokens are N(0, 1) with the listed channels and token
/// positions multiplied.
struct ToySpec {
  BlockDims dims;
  std::uint64_t seed = 0;
  std::size_t sequences = 128;
  std::size_t tokens = 16;
  std::vector<Outlier> channel_outliers;
  std::vector<Outlier> token_outliers;

  void validate() const;
};

BlockWeights make_toy_block(const BlockDims& dims, std::uint64_t seed);

/// `sequences` tensors of shape [tokens, d_model].
std::vector<FloatTensor> make_toy_data(const ToySpec& spec, std::uint64_t stream);

}  // namespace iqk
