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

#include <array>
#include <cmath>

#include "iqkernel/error.hpp"
#include "iqkernel/quant.hpp"
#include "iqkernel/rng.hpp"

namespace iqk {
namespace {

FloatTensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
  FloatTensor t({r, c});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

TEST(FloatTensor, RejectsNonFinite) {
  EXPECT_THROW(FloatTensor({2}, {1.0f, NAN}), ValidationError);
  EXPECT_THROW(FloatTensor({2}, {1.0f, INFINITY}), ValidationError);
  EXPECT_THROW(FloatTensor({3}, {1.0f, 2.0f}), ValidationError);
}

TEST(Quantize, LinearRamp) {
  const QuantTensor q = quantize(FloatTensor({3}, {0.0f, 0.5f, 1.0f}), 8, Granularity::PerTensor);
  ASSERT_EQ(q.scales().size(), 1u);
  // The step is the smallest dyadic >= 1/255, so the top code is 254.
  EXPECT_GE(q.scales()[0].value(), 1.0 / 255.0);
  EXPECT_EQ(q.zero_points()[0], 0);
  EXPECT_EQ(q.data()[0], 0);
  EXPECT_EQ(q.data()[1], 127);
  EXPECT_EQ(q.data()[2], 254);
  const FloatTensor back = dequantize(q);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_LE(std::abs(back[i] - std::array{0.0f, 0.5f, 1.0f}[i]), q.scales()[0].value());
}

TEST(Quantize, AllZerosIsDegenerate) {
  const QuantTensor q = quantize(FloatTensor({2, 3}), 8, Granularity::PerTensor);
  EXPECT_EQ(q.scales()[0].m, 0u);
  for (auto v : q.data()) EXPECT_EQ(v, q.zero_points()[0]);
  const FloatTensor back_q = dequantize(q);
  for (float v : back_q.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Quantize, ConstantNonzeroSurvives) {
  const QuantTensor q = quantize(FloatTensor({4}, {2.5f, 2.5f, 2.5f, 2.5f}), 8, Granularity::PerTensor);
  const FloatTensor back_q = dequantize(q);
  for (float v : back_q.data()) EXPECT_NEAR(v, 2.5f, q.scales()[0].value());
}

TEST(Dequantize, DirectFormula) {
  QuantParams p{{DyadicScale{1, 8}}, {0}};
  const QuantTensor q({3}, {0, 128, 255}, 8, Granularity::PerTensor, p);
  const FloatTensor x = dequantize(q);
  EXPECT_EQ(x[0], 0.0f);
  EXPECT_EQ(x[1], 0.5f);
  EXPECT_EQ(x[2], 0.99609375f);
}

TEST(Dequantize, ZeroPointIsZero) {
  QuantParams p{{DyadicScale{200, 10}}, {77}};
  const QuantTensor q({4}, {77, 77, 77, 77}, 8, Granularity::PerTensor, p);
  const FloatTensor back_q = dequantize(q);
  for (float v : back_q.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Quantize, RoundTripWithinOneStep) {
  Rng rng(1);
  const FloatTensor x = random_tensor(rng, 1, 1000, -3.0, 3.0);
  for (int bits : {4, 6, 8}) {
    const QuantTensor q = quantize(x, bits, Granularity::PerTensor);
    const FloatTensor back = dequantize(q);
    const double step = q.scales()[0].value();
    EXPECT_LE(step, 6.0 / level_count(bits) * (1.0 + std::ldexp(1.0, -7)));
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_LE(std::abs(back[i] - x[i]), step);
    if (bits == 8) {
      for (std::size_t i = 0; i < x.size(); ++i)
        ASSERT_LE(std::abs(back[i] - x[i]), 6.0 / 255.0 * (1.0 + std::ldexp(1.0, -8)));
    }
  }
}

TEST(Quantize, GranularitiesHaveOneParameterPerSlice) {
  Rng rng(2);
  const FloatTensor x = random_tensor(rng, 5, 7, -1.0, 1.0);
  EXPECT_EQ(quantize(x, 8, Granularity::PerTensor).scales().size(), 1u);
  EXPECT_EQ(quantize(x, 8, Granularity::PerToken).scales().size(), 5u);
  EXPECT_EQ(quantize(x, 8, Granularity::PerChannel).scales().size(), 7u);
  for (auto g : {Granularity::PerTensor, Granularity::PerToken, Granularity::PerChannel}) {
    const QuantTensor q = quantize(x, 4, g);
    for (auto v : q.data()) ASSERT_LE(v, 15);
    const FloatTensor back = dequantize(q);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 7; ++c)
        ASSERT_LE(std::abs(back.at(r, c) - x.at(r, c)), q.scale_at(r, c).value());
  }
}

TEST(Quantize, PerTokenIsolatesRowMagnitudes) {
  FloatTensor x({2, 4}, {0.01f, -0.02f, 0.03f, 0.0f, 10.0f, -20.0f, 30.0f, 0.0f});
  const QuantTensor q = quantize(x, 8, Granularity::PerToken);
  EXPECT_GT(q.scales()[1].value() / q.scales()[0].value(), 500.0);
}

TEST(QuantizeStatic, ClampsOutsideRange) {
  const std::vector<float> lo{-1.0f}, hi{1.0f};
  const QuantParams p = params_from_range(lo, hi, 8);
  const QuantTensor q =
      quantize_static(FloatTensor({1, 3}, {-5.0f, 0.0f, 5.0f}), 8, Granularity::PerTensor, p);
  EXPECT_EQ(q.data()[0], 0);
  EXPECT_EQ(q.data()[2], 255);
  const FloatTensor back = dequantize(q);
  EXPECT_NEAR(back[0], -1.0f, p.scale[0].value());
  EXPECT_NEAR(back[1], 0.0f, p.scale[0].value() / 2);
}

TEST(QuantizeStatic, IdempotentUnderOwnParameters) {
  Rng rng(8);
  const FloatTensor x = random_tensor(rng, 6, 9, -2.0, 3.0);
  const QuantTensor q = quantize(x, 6, Granularity::PerChannel);
  const QuantTensor again = quantize_static(dequantize(q), 6, Granularity::PerChannel, q.params());
  EXPECT_EQ(again, q);
}

TEST(QuantTensor, ValidatesConstruction) {
  QuantParams one{{DyadicScale{1, 0}}, {0}};
  EXPECT_THROW(QuantTensor({2}, {0, 16}, 4, Granularity::PerTensor, one), ValidationError);
  EXPECT_THROW(QuantTensor({2}, {0}, 8, Granularity::PerTensor, one), ValidationError);
  EXPECT_THROW(QuantTensor({2, 2}, {0, 0, 0, 0}, 8, Granularity::PerToken, one), ValidationError);
  EXPECT_THROW(quantize(FloatTensor({2}), 1, Granularity::PerTensor), ValidationError);
}

TEST(QuantTensor, TransposeSwapsGranularity) {
  Rng rng(3);
  const FloatTensor x = random_tensor(rng, 3, 5, -1.0, 1.0);
  const QuantTensor q = quantize(x, 8, Granularity::PerToken);
  const QuantTensor t = transpose(q);
  EXPECT_EQ(t.granularity(), Granularity::PerChannel);
  EXPECT_EQ(t.shape(), (Shape{5, 3}));
  const FloatTensor a = dequantize(q), b = dequantize(t);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(a.at(r, c), b.at(c, r));
}

TEST(Granularity, NamesRoundTrip) {
  for (auto g : {Granularity::PerTensor, Granularity::PerToken, Granularity::PerChannel})
    EXPECT_EQ(parse_granularity(granularity_name(g)), g);
  EXPECT_THROW(parse_granularity("per-row"), ValidationError);
}

}  // namespace
}  // namespace iqk
