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

#include <gtest/gtest.h>

#include <cmath>

#include "iqkernel/di_matmul.hpp"
#include "iqkernel/error.hpp"
#include "iqkernel/rng.hpp"

namespace iqk {
namespace {

// Random unsigned 8-bit tensor with a random dyadic scale per slice.
QuantTensor random_quant(Rng& rng, std::size_t r, std::size_t c, Granularity g, int bits = 8) {
  const std::size_t groups = g == Granularity::PerTensor ? 1 : g == Granularity::PerToken ? r : c;
  QuantParams p;
  for (std::size_t i = 0; i < groups; ++i) {
    p.scale.push_back(DyadicScale{static_cast<std::uint32_t>(rng.uniform_int(128, 255)),
                                  static_cast<std::uint32_t>(rng.uniform_int(12, 16))});
    p.zero_point.push_back(static_cast<std::int32_t>(rng.uniform_int(0, level_count(bits))));
  }
  std::vector<std::uint8_t> data(r * c);
  for (auto& v : data) v = static_cast<std::uint8_t>(rng.uniform_int(0, level_count(bits)));
  return QuantTensor({r, c}, std::move(data), bits, g, std::move(p));
}

std::vector<double> double_matmul(const FloatTensor& a, const FloatTensor& b) {
  std::vector<double> out(a.rows() * b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t l = 0; l < a.cols(); ++l)
      for (std::size_t j = 0; j < b.cols(); ++j)
        out[i * b.cols() + j] += static_cast<double>(a.at(i, l)) * b.at(l, j);
  return out;
}

TEST(IntGemm, ExactProductForEveryGranularityPair) {
  Rng rng(1);
  const Granularity gs[] = {Granularity::PerTensor, Granularity::PerToken, Granularity::PerChannel};
  for (auto g1 : gs)
    for (auto g2 : gs) {
      const QuantTensor a = random_quant(rng, 5, 9, g1);
      const QuantTensor b = random_quant(rng, 9, 4, g2);
      const IntAccumulator acc = int_gemm(a, b);
      const std::vector<double> want = double_matmul(dequantize(a), dequantize(b));
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          const double got = static_cast<double>(acc.at(i, j)) * acc.row_scale(i);
          ASSERT_NEAR(got, want[i * 4 + j], 1e-9 * (1.0 + std::abs(want[i * 4 + j])));
        }
    }
}

TEST(IntGemm, CenteredIntegerSum) {
  Rng rng(2);
  const QuantTensor a = random_quant(rng, 3, 6, Granularity::PerTensor);
  const QuantTensor b = random_quant(rng, 6, 2, Granularity::PerTensor);
  const IntAccumulator acc = int_gemm(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      std::int64_t s = 0;
      for (std::size_t l = 0; l < 6; ++l)
        s += static_cast<std::int64_t>(a.centered(i, l)) * b.centered(l, j);
      EXPECT_EQ(acc.at(i, j), s);
    }
}

TEST(IntGemm, ShapeMismatchThrows) {
  Rng rng(3);
  EXPECT_THROW(int_gemm(random_quant(rng, 2, 3, Granularity::PerTensor),
                        random_quant(rng, 4, 2, Granularity::PerTensor)),
               ValidationError);
}

TEST(DiMatMul, OneByOneIsExact) {
  QuantParams unit{{DyadicScale{1, 0}}, {0}};
  const QuantTensor a({1, 1}, {2}, 8, Granularity::PerTensor, unit);
  const QuantTensor b({1, 1}, {3}, 8, Granularity::PerTensor, unit);
  const QuantTensor y = di_matmul(a, b, 8, Granularity::PerTensor);
  EXPECT_EQ(dequantize(y)[0], 6.0f);
}

TEST(DiMatMul, ZeroOperandAnnihilates) {
  Rng rng(4);
  QuantParams p{{DyadicScale{200, 10}}, {9}};
  const QuantTensor zero({2, 3}, std::vector<std::uint8_t>(6, 9), 8, Granularity::PerTensor, p);
  const QuantTensor b = random_quant(rng, 3, 4, Granularity::PerChannel);
  DiMatMulInfo info;
  const QuantTensor y = di_matmul(zero, b, 8, Granularity::PerTensor, &info);
  EXPECT_EQ(info.degenerate, 1u);
  const FloatTensor back_y = dequantize(y);
  for (float v : back_y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(DiMatMul, RandomInstancesWithinOneOutputStep) {
  Rng rng(5);
  for (auto g : {Granularity::PerTensor, Granularity::PerToken}) {
    for (int trial = 0; trial < 200; ++trial) {
      const QuantTensor a = random_quant(rng, 8, 16, Granularity::PerToken);
      const QuantTensor b = random_quant(rng, 16, 8, Granularity::PerChannel);
      const QuantTensor y = di_matmul(a, b, 8, g);
      const FloatTensor yd = dequantize(y);
      const std::vector<double> want = double_matmul(dequantize(a), dequantize(b));
      double glo = want[0], ghi = want[0];
      for (double v : want) {
        glo = std::min(glo, v);
        ghi = std::max(ghi, v);
      }
      for (std::size_t i = 0; i < 8; ++i) {
        double lo = want[i * 8], hi = want[i * 8];
        for (std::size_t j = 0; j < 8; ++j) {
          lo = std::min(lo, want[i * 8 + j]);
          hi = std::max(hi, want[i * 8 + j]);
        }
        const double range = g == Granularity::PerToken ? hi - lo : ghi - glo;
        for (std::size_t j = 0; j < 8; ++j) {
          // Output rounding plus the dyadic-fit slack over the group range.
          const double bound = y.scale_at(i, j).value() + std::ldexp(1.0, -8) * range;
          ASSERT_LE(std::abs(yd.at(i, j) - want[i * 8 + j]), bound + 1e-9);
        }
      }
    }
  }
}

TEST(DiMatMul, PerTokenBeatsPerTensorOnRowOutliers) {
  Rng rng(6);
  FloatTensor x({2, 16});
  for (std::size_t c = 0; c < 16; ++c) {
    x.at(0, c) = static_cast<float>(rng.normal());
    x.at(1, c) = static_cast<float>(100.0 * rng.normal());
  }
  FloatTensor w({16, 8});
  for (auto& v : w.data()) v = static_cast<float>(rng.normal());
  const QuantTensor a = quantize(x, 8, Granularity::PerToken);
  const QuantTensor b = quantize(w, 8, Granularity::PerChannel);
  const std::vector<double> want = double_matmul(dequantize(a), dequantize(b));
  const QuantTensor tok = di_matmul(a, b, 8, Granularity::PerToken);
  const QuantTensor ten = di_matmul(a, b, 8, Granularity::PerTensor);
  EXPECT_GT(tok.scales()[1].value() / tok.scales()[0].value(), 10.0);
  auto mse = [&](const QuantTensor& y) {
    const FloatTensor d = dequantize(y);
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += (d[i] - want[i]) * (d[i] - want[i]);
    return s / static_cast<double>(d.size());
  };
  EXPECT_LT(mse(tok), mse(ten));
}

TEST(OutputScale, MatchesDirectFit) {
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const i128 range = rng.uniform_int(1, std::int64_t{1} << 40);
    const auto M = static_cast<std::uint64_t>(rng.uniform_int(1, 1 << 16));
    const auto K = static_cast<std::uint32_t>(rng.uniform_int(10, 40));
    const double target = std::ldexp(static_cast<double>(range) * static_cast<double>(M) / 255.0,
                                     -static_cast<int>(K));
    if (target >= 255.5) {
      EXPECT_THROW(output_scale(range, M, K, 255), NumericalError);
      continue;
    }
    const DyadicScale s = output_scale(range, M, K, 255);
    ASSERT_LE(s.m, 255u);
    ASSERT_LE(std::abs(s.value() - target) / target, std::ldexp(1.0, -7));
  }
}

TEST(Requantize, StaticParametersClamp) {
  IntAccumulator acc;
  acc.rows = 1;
  acc.cols = 3;
  acc.data = {-1000, 0, 1000};
  acc.mantissa = {1};
  acc.shift = {4};  // 1/16 per unit: -62.5, 0, 62.5
  const std::vector<float> lo{-10.0f, -10.0f, -10.0f}, hi{10.0f, 10.0f, 10.0f};
  const QuantParams p = params_from_range(lo, hi, 8);
  const FloatTensor y = dequantize(requantize_static(acc, 8, p));
  EXPECT_NEAR(y[0], -10.0f, p.scale[0].value());
  EXPECT_NEAR(y[1], 0.0f, p.scale[1].value());
  EXPECT_NEAR(y[2], 10.0f, p.scale[2].value());
}

TEST(Accumulator, ResidualAddAlignsScales) {
  Rng rng(8);
  const QuantTensor a = random_quant(rng, 4, 6, Granularity::PerToken);
  const QuantTensor b = random_quant(rng, 4, 6, Granularity::PerToken);
  const FloatTensor sum = dequantize(residual_add(to_accumulator(a), to_accumulator(b)));
  const FloatTensor da = dequantize(a), db = dequantize(b);
  for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_NEAR(sum[i], da[i] + db[i], 1e-5);
}

TEST(Accumulator, ToAccumulatorIsExact) {
  Rng rng(9);
  const QuantTensor a = random_quant(rng, 3, 5, Granularity::PerChannel);
  const FloatTensor x = dequantize(a), y = dequantize(to_accumulator(a));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(Accumulator, SliceAndConcat) {
  Rng rng(10);
  const QuantTensor a = random_quant(rng, 4, 8, Granularity::PerChannel);
  const QuantTensor left = slice_cols(a, 0, 3), right = slice_cols(a, 3, 8);
  EXPECT_EQ(left.shape(), (Shape{4, 3}));
  const FloatTensor full = dequantize(a), l = dequantize(left), r = dequantize(right);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(l.at(i, c), full.at(i, c));
    for (std::size_t c = 3; c < 8; ++c) EXPECT_EQ(r.at(i, c - 3), full.at(i, c));
  }
  const QuantTensor t = random_quant(rng, 4, 8, Granularity::PerToken);
  const IntAccumulator joined =
      concat_cols({to_accumulator(slice_cols(t, 0, 5)), to_accumulator(slice_cols(t, 5, 8))});
  const FloatTensor j = dequantize(joined), want = dequantize(t);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(j[i], want[i]);
}

}  // namespace
}  // namespace iqk
