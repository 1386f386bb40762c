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
#include <string>
#include <vector>

#include "iqkernel/integer_math.hpp"
#include "iqkernel/tensor.hpp"

namespace iqk {

/// Which slices share a scale. Vector granularities apply to rank-2 tensors:
/// PerToken groups rows (axis 0), PerChannel groups columns (axis 1).
enum class Granularity { PerTensor, PerToken, PerChannel };

const char* granularity_name(Granularity g);
Granularity parse_granularity(const std::string& s);

inline std::uint32_t level_count(int bits) {
  return (std::uint32_t{1} << bits) - 1;
}

/// Per-slice scale and zero-point.
struct QuantParams {
  std::vector<DyadicScale> scale;
  std::vector<std::int32_t> zero_point;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

/// Unsigned integer payload + dyadic scale(s) + zero-point(s).
/// Real value of element e in slice g: (data[e] - zp[g]) * m[g] / 2^k[g].
class QuantTensor {
 public:
  QuantTensor() = default;
  QuantTensor(Shape shape, std::vector<std::uint8_t> data, int bits,
              Granularity granularity, QuantParams params);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.size() > 1 ? shape_[1] : 1; }
  int bits() const { return bits_; }
  Granularity granularity() const { return granularity_; }
  std::size_t axis() const { return granularity_ == Granularity::PerChannel ? 1 : 0; }

  std::span<const std::uint8_t> data() const { return data_; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  const QuantParams& params() const { return params_; }
  const std::vector<DyadicScale>& scales() const { return params_.scale; }
  const std::vector<std::int32_t>& zero_points() const { return params_.zero_point; }

  // Slice index owning element (r, c).
  std::size_t group_of(std::size_t r, std::size_t c) const {
    switch (granularity_) {
      case Granularity::PerToken: return r;
      case Granularity::PerChannel: return c;
      default: return 0;
    }
  }
  DyadicScale scale_at(std::size_t r, std::size_t c) const {
    return params_.scale[group_of(r, c)];
  }
  std::int32_t zp_at(std::size_t r, std::size_t c) const {
    return params_.zero_point[group_of(r, c)];
  }
  // data - zp, the signed view.
  std::int32_t centered(std::size_t r, std::size_t c) const {
    return static_cast<std::int32_t>(at(r, c)) - zp_at(r, c);
  }

  friend bool operator==(const QuantTensor&, const QuantTensor&) = default;

 private:
  Shape shape_;
  std::vector<std::uint8_t> data_;
  int bits_ = 8;
  Granularity granularity_ = Granularity::PerTensor;
  QuantParams params_;
};

/// Dynamic uniform affine quantization: per slice s = (max - min) / (2^bits - 1),
/// snapped up to a dyadic step, zp = round(-min / s), clamp to [0, 2^bits - 1].
/// A constant zero slice gets m = 0. A nonzero slice that is constant to
/// within 2^-20 of its magnitude, or whose zero-point would pass 2^30, widens
/// its range to include 0.
QuantTensor quantize(const FloatTensor& x, int bits, Granularity granularity);

/// Per-slice parameters from explicit ranges (static calibration).
QuantParams params_from_range(std::span<const float> lo, std::span<const float> hi,
                              int bits);

/// Quantize with fixed parameters (values outside the range clamp).
QuantTensor quantize_static(const FloatTensor& x, int bits, Granularity granularity,
                            const QuantParams& params);

FloatTensor dequantize(const QuantTensor& q);

/// Transpose of a rank-2 tensor; PerToken and PerChannel swap.
QuantTensor transpose(const QuantTensor& q);

}  // namespace iqk
