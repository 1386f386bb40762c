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

#include "iqkernel/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iqkernel/error.hpp"
#include "iqkernel/trace.hpp"

namespace iqk {

const char* granularity_name(Granularity g) {
  switch (g) {
    case Granularity::PerTensor: return "per-tensor";
    case Granularity::PerToken: return "per-token";
    case Granularity::PerChannel: return "per-channel";
  }
  return "?";
}

Granularity parse_granularity(const std::string& s) {
  if (s == "per-tensor") return Granularity::PerTensor;
  if (s == "per-token") return Granularity::PerToken;
  if (s == "per-channel") return Granularity::PerChannel;
  throw ValidationError("unknown granularity '" + s + "'");
}

namespace {

std::size_t group_count(const Shape& shape, Granularity g) {
  if (g == Granularity::PerTensor) return 1;
  require(shape.size() == 2, std::string(granularity_name(g)) +
                                 " quantization needs a rank-2 tensor");
  return g == Granularity::PerToken ? shape[0] : shape[1];
}

void check_bits(int bits) {
  require(bits == 4 || bits == 6 || bits == 8,
          "bits must be 4, 6 or 8 (got " + std::to_string(bits) + ")");
}

struct SliceParams {
  DyadicScale scale;
  std::int32_t zp = 0;
};

SliceParams solve_slice(double lo, double hi, int bits) {
  const double n = level_count(bits);
  if (lo == hi && lo == 0.0) return {{0, 0}, 0};
  // A (nearly) constant slice, or one so far from 0 that the zero-point
  // leaves 32 bits, is widened to include 0.
  const double mag = std::max(std::abs(lo), std::abs(hi));
  if (hi - lo <= mag * 0x1p-20 || mag / (hi - lo) * n > 0x1p30) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
  }
  const DyadicScale d = fit_dyadic_ceil((hi - lo) / n);
  const double zp = std::round(-lo / d.value());
  return {d, static_cast<std::int32_t>(zp)};
}

QuantTensor encode_all(const FloatTensor& x, int bits, Granularity g,
                       QuantParams params) {
  const double n = level_count(bits);
  const std::size_t groups = params.scale.size();
  std::vector<double> step(groups), zp(groups);
  for (std::size_t i = 0; i < groups; ++i) {
    step[i] = params.scale[i].value();
    zp[i] = params.zero_point[i];
  }
  std::vector<std::uint8_t> data(x.size());
  const std::size_t cols = x.rank() > 1 ? x.cols() : x.size();
  const std::size_t rows = x.size() / cols;
  const float* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t gi = g == Granularity::PerToken ? r
                             : g == Granularity::PerChannel ? c : 0;
      const std::size_t e = r * cols + c;
      const double v = step[gi] == 0.0
                           ? zp[gi]
                           : std::round(static_cast<double>(px[e]) / step[gi]) + zp[gi];
      data[e] = static_cast<std::uint8_t>(std::clamp(v, 0.0, n));
    }
  }
  return QuantTensor(x.shape(), std::move(data), bits, g, std::move(params));
}

}  // namespace

QuantTensor::QuantTensor(Shape shape, std::vector<std::uint8_t> data, int bits,
                         Granularity granularity, QuantParams params)
    : shape_(std::move(shape)),
      data_(std::move(data)),
      bits_(bits),
      granularity_(granularity),
      params_(std::move(params)) {
  require(bits_ >= 1 && bits_ <= 8, "QuantTensor: bits must be in [1, 8]");
  require(data_.size() == shape_numel(shape_), "QuantTensor: data length mismatch");
  const std::size_t groups = group_count(shape_, granularity_);
  require(params_.scale.size() == groups && params_.zero_point.size() == groups,
          "QuantTensor: expected " + std::to_string(groups) +
              " scales/zero-points for " + granularity_name(granularity_));
  const std::uint32_t n = level_count(bits_);
  for (std::uint8_t v : data_) {
    require(v <= n, "QuantTensor: value exceeds 2^bits - 1");
  }
  for (const auto& s : params_.scale) {
    require(s.m <= 255 && s.k <= 255, "QuantTensor: dyadic m, k must be in [0, 255]");
  }
}

QuantTensor quantize(const FloatTensor& x, int bits, Granularity granularity) {
  check_bits(bits);
  require(!x.empty(), "quantize: empty tensor");
  const std::size_t groups = group_count(x.shape(), granularity);
  IQK_TRACE_FLOAT("quantize", 3 * x.size());
  std::vector<float> lo(groups, INFINITY), hi(groups, -INFINITY);
  const std::size_t cols = x.rank() > 1 ? x.cols() : x.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t gi = granularity == Granularity::PerToken ? i / cols
                           : granularity == Granularity::PerChannel ? i % cols : 0;
    lo[gi] = std::min(lo[gi], x[i]);
    hi[gi] = std::max(hi[gi], x[i]);
  }
  return encode_all(x, bits, granularity, params_from_range(lo, hi, bits));
}

QuantParams params_from_range(std::span<const float> lo, std::span<const float> hi,
                              int bits) {
  check_bits(bits);
  require(lo.size() == hi.size(), "params_from_range: size mismatch");
  IQK_TRACE_FLOAT("params_from_range", 4 * lo.size());
  QuantParams p;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    require(std::isfinite(lo[i]) && std::isfinite(hi[i]) && lo[i] <= hi[i],
            "params_from_range: invalid range");
    const SliceParams sp = solve_slice(lo[i], hi[i], bits);
    p.scale.push_back(sp.scale);
    p.zero_point.push_back(sp.zp);
  }
  return p;
}

QuantTensor quantize_static(const FloatTensor& x, int bits, Granularity granularity,
                            const QuantParams& params) {
  check_bits(bits);
  require(!x.empty(), "quantize: empty tensor");
  const std::size_t groups = group_count(x.shape(), granularity);
  require(params.scale.size() == groups && params.zero_point.size() == groups,
          "quantize_static: parameter count mismatch");
  IQK_TRACE_FLOAT("quantize_static", 2 * x.size());
  return encode_all(x, bits, granularity, params);
}

FloatTensor dequantize(const QuantTensor& q) {
  IQK_TRACE_FLOAT("dequantize", 2 * q.size());
  const std::size_t groups = q.scales().size();
  std::vector<double> step(groups);
  for (std::size_t i = 0; i < groups; ++i) step[i] = q.scales()[i].value();
  std::vector<float> out(q.size());
  const std::size_t cols = q.shape().size() > 1 ? q.cols() : q.size();
  const std::size_t rows = q.size() / cols;
  const auto data = q.data();
  const auto& zps = q.zero_points();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t gi = q.group_of(r, c);
      const std::size_t e = r * cols + c;
      out[e] = static_cast<float>(
          static_cast<double>(static_cast<std::int32_t>(data[e]) - zps[gi]) * step[gi]);
    }
  }
  return FloatTensor(q.shape(), std::move(out));
}

QuantTensor transpose(const QuantTensor& q) {
  require(q.shape().size() == 2, "transpose: rank-2 tensor required");
  const std::size_t rows = q.rows(), cols = q.cols();
  std::vector<std::uint8_t> data(q.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) data[c * rows + r] = q.at(r, c);
  Granularity g = q.granularity();
  if (g == Granularity::PerToken) g = Granularity::PerChannel;
  else if (g == Granularity::PerChannel) g = Granularity::PerToken;
  return QuantTensor({cols, rows}, std::move(data), q.bits(), g, q.params());
}

}  // namespace iqk
