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

#include "iqkernel/di_nonlinear.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "iqkernel/error.hpp"
#include "iqkernel/integer_math.hpp"
#include "iqkernel/trace.hpp"

namespace iqk {

namespace {

constexpr int kSoftmaxInternalBits = 8;
// Extra fraction bits given to DI-Exp inputs: the same real values on a grid
// 2^8 finer, so the shift-out in DI-Exp keeps resolution.
constexpr std::uint32_t kExpRefineBits = 8;
constexpr std::uint32_t kNormAlignMax = 24;
constexpr std::uint32_t kNormOutShift = 16;

void check_out_bits(int bits) {
  require(bits == 4 || bits == 6 || bits == 8,
          "out_bits must be 4, 6 or 8 (got " + std::to_string(bits) + ")");
}

std::uint32_t bit_length(u128 v) { return v == 0 ? 0 : floor_log2_wide(v) + 1; }

std::uint32_t ceil_log2(std::uint64_t n) {
  return n <= 1 ? 0 : floor_log2(n - 1) + 1;
}

}  // namespace

double ClipConfig::value() const {
  IQK_TRACE_FLOAT("ClipConfig::value", 1);
  return std::ldexp(static_cast<double>(c_m), -static_cast<int>(c_k));
}

ClipConfig ClipConfig::from_int(std::int64_t c) {
  require(c > 0 && c <= 255, "clip c must be in [1, 255]");
  return {static_cast<std::uint32_t>(c), 0, true};
}

QuantTensor di_clipped_softmax(const IntAccumulator& logits, const ClipConfig& clip,
                               int out_bits, bool causal) {
  check_out_bits(out_bits);
  require(logits.cols > 0, "di_clipped_softmax: zero-length row");
  require(!clip.enabled || clip.c_m > 0, "di_clipped_softmax: clip c must be > 0");
  require(!causal || logits.cols >= logits.rows,
          "di_clipped_softmax: causal mask needs cols >= rows");
  const std::size_t R = logits.rows, C = logits.cols;
  const std::uint32_t n = level_count(kSoftmaxInternalBits);
  const auto p = static_cast<std::uint32_t>(out_bits);
  std::vector<std::uint8_t> out(R * C, 0);
  std::vector<std::int64_t> e(C);

  for (std::size_t i = 0; i < R; ++i) {
    const std::size_t visible = causal ? i + (C - R) + 1 : C;
    const std::uint64_t M = logits.mantissa[i];
    const std::uint32_t K = logits.shift[i];
    i128 pmax = logits.at(i, 0), pmin = logits.at(i, 0);
    for (std::size_t j = 0; j < visible; ++j) {
      pmax = std::max<i128>(pmax, logits.at(i, j));
      pmin = std::min<i128>(pmin, logits.at(i, j));
    }
    if (clip.enabled && M != 0) {
      // c in accumulator units: c * 2^K / M.
      if (K + 1 > 100) throw NumericalError("di_clipped_softmax: shift too large");
      const i128 cI = round_div(static_cast<i128>(clip.c_m) << K,
                                static_cast<i128>(M) << clip.c_k);
      pmin = std::max(pmin, pmax - cI);
    }
    std::fill(e.begin(), e.end(), 0);
    if (pmax == pmin || M == 0) {
      // Every visible logit is at the maximum.
      for (std::size_t j = 0; j < visible; ++j) {
        e[j] = logits.at(i, j) == pmax || M == 0 ? 1 : 0;
      }
    } else {
      const i128 range = pmax - pmin;
      const DyadicScale sy = output_scale(range, M, K, n);
      const DiExpParams ep = di_exp_params({sy.m, sy.k + kExpRefineBits});
      for (std::size_t j = 0; j < visible; ++j) {
        const i128 v = std::max<i128>(logits.at(i, j), pmin);
        const auto y = static_cast<std::int64_t>(round_div((v - pmin) * n, range));
        const std::int64_t delta = y - static_cast<std::int64_t>(n);
        e[j] = di_exp(delta * (std::int64_t{1} << kExpRefineBits), ep);
      }
    }
    std::uint64_t sum = 0;
    for (std::size_t j = 0; j < visible; ++j) sum += static_cast<std::uint64_t>(e[j]);
    for (std::size_t j = 0; j < visible; ++j) {
      out[i * C + j] = static_cast<std::uint8_t>(
          int_div(static_cast<std::uint64_t>(e[j]), sum, p));
    }
  }
  QuantParams params;
  params.scale.assign(R, DyadicScale{1, p - 1});
  params.zero_point.assign(R, 0);
  return QuantTensor({R, C}, std::move(out), out_bits, Granularity::PerToken,
                     std::move(params));
}

QuantTensor di_clipped_softmax(const QuantTensor& logits, const ClipConfig& clip,
                               int out_bits, bool causal) {
  require(logits.granularity() != Granularity::PerChannel,
          "di_clipped_softmax: logits must be per-token or per-tensor");
  return di_clipped_softmax(to_accumulator(logits), clip, out_bits, causal);
}

IntNormParams IntNormParams::from(const NormParams& p) {
  IQK_TRACE_FLOAT("IntNormParams::from", 2 * (p.gamma.size() + p.beta.size()));
  require(!p.gamma.empty(), "norm: gamma is empty");
  require(p.beta.empty() || p.beta.size() == p.gamma.size(),
          "norm: beta length differs from gamma");
  double gmax = 0.0;
  for (float g : p.gamma) {
    require(std::isfinite(g), "norm: gamma must be finite");
    gmax = std::max(gmax, std::fabs(static_cast<double>(g)));
  }
  IntNormParams out;
  // Largest shift that keeps every |g| below 2^15.
  int shift = 0;
  if (gmax > 0.0) {
    shift = 14 - static_cast<int>(std::floor(std::log2(gmax)));
    while (shift > 0 && std::round(std::ldexp(gmax, shift)) >= 32768.0) --shift;
    shift = std::clamp(shift, 0, 40);
  }
  require(std::round(std::ldexp(gmax, shift)) < 32768.0,
          "norm: gamma magnitude too large for 16-bit fixed point");
  out.g_shift = static_cast<std::uint32_t>(shift);
  for (float g : p.gamma) {
    out.g.push_back(static_cast<std::int32_t>(std::round(std::ldexp(g, shift))));
  }
  for (float b : p.beta) {
    require(std::isfinite(b), "norm: beta must be finite");
    out.b.push_back(static_cast<std::int64_t>(std::round(std::ldexp(b, kBetaShift))));
  }
  return out;
}

namespace {

QuantTensor int_norm(const QuantTensor& x, const IntNormParams& params, int out_bits,
                     bool center) {
  check_out_bits(out_bits);
  require(x.shape().size() == 2, "norm: rank-2 input required");
  const std::size_t T = x.rows(), D = x.cols();
  require(params.g.size() == D, "norm: gamma length " + std::to_string(params.g.size()) +
                                    " differs from channel count " + std::to_string(D));
  require(params.b.empty() || params.b.size() == D, "norm: beta length mismatch");

  // Channel mantissas aligned to the finest shift.
  std::vector<std::int64_t> a(D);
  if (x.granularity() == Granularity::PerChannel) {
    std::uint32_t K = 0;
    for (const auto& s : x.scales()) K = std::max(K, s.k);
    for (std::size_t c = 0; c < D; ++c) {
      const DyadicScale s = x.scales()[c];
      if (K - s.k > kNormAlignMax) {
        throw NumericalError("norm: channel scale alignment shift " +
                             std::to_string(K - s.k) + " exceeds " +
                             std::to_string(kNormAlignMax));
      }
      a[c] = static_cast<std::int64_t>(s.m) << (K - s.k);
    }
  } else {
    // Per-token or per-tensor input: the scale cancels in x / rms(x) except
    // for its sign, which is always positive.
    std::fill(a.begin(), a.end(), 1);
  }

  const std::uint32_t T_bits = (63u - ceil_log2(D)) / 2u;
  const std::int64_t n = static_cast<std::int64_t>(D);
  IntAccumulator acc;
  acc.rows = T;
  acc.cols = D;
  acc.data.assign(T * D, 0);
  acc.mantissa.assign(T, 1);
  acc.shift.assign(T, kNormOutShift);
  std::vector<std::int64_t> v(D);

  for (std::size_t t = 0; t < T; ++t) {
    bool any_scale = true;
    if (x.granularity() != Granularity::PerChannel) any_scale = x.scale_at(t, 0).m != 0;
    for (std::size_t c = 0; c < D; ++c) v[c] = any_scale ? x.centered(t, c) * a[c] : 0;
    if (center) {
      std::int64_t sum = 0;
      for (std::int64_t e : v) sum += e;
      const std::int64_t mean = round_div(sum, n);
      for (auto& e : v) e -= mean;
    }
    std::uint64_t vmax = 0;
    for (std::int64_t e : v) vmax = std::max<std::uint64_t>(vmax, e < 0 ? -e : e);
    std::int64_t* y = acc.data.data() + t * D;
    if (vmax != 0) {
      // Normalize to T_bits so the 64-bit sum of squares cannot overflow.
      const std::uint32_t len = bit_length(vmax);
      if (len > T_bits) {
        const std::uint32_t sh = len - T_bits;
        for (auto& e : v) e = round_div(e, std::int64_t{1} << sh);
      } else {
        const std::uint32_t sh = T_bits - len;
        for (auto& e : v) e <<= sh;
      }
      std::uint64_t sumsq = 0;
      for (std::int64_t e : v) sumsq += static_cast<std::uint64_t>(e * e);
      const std::uint64_t rms = i_sqrt(sumsq / D);
      if (rms != 0) {
        const i128 den = static_cast<i128>(rms) << params.g_shift;
        for (std::size_t c = 0; c < D; ++c) {
          const i128 num = (static_cast<i128>(v[c]) * params.g[c]) << kNormOutShift;
          y[c] = static_cast<std::int64_t>(round_div(num, den));
        }
      }
    }
    if (!params.b.empty()) {
      for (std::size_t c = 0; c < D; ++c) y[c] += params.b[c];
    }
  }
  return requantize(acc, out_bits, Granularity::PerToken);
}

}  // namespace

QuantTensor di_rmsnorm(const QuantTensor& x, const IntNormParams& params, int out_bits) {
  return int_norm(x, params, out_bits, /*center=*/false);
}

QuantTensor di_layernorm(const QuantTensor& x, const IntNormParams& params, int out_bits) {
  return int_norm(x, params, out_bits, /*center=*/true);
}

SmoothDivisor SmoothDivisor::from(const std::vector<float>& s) {
  IQK_TRACE_FLOAT("SmoothDivisor::from", s.size());
  SmoothDivisor out;
  for (float v : s) {
    require(std::isfinite(v) && v > 0.0f, "smoothing factors must be > 0");
    const double a = std::round(std::ldexp(static_cast<double>(v), kShift));
    require(a >= 1.0 && a < 4294967296.0, "smoothing factor out of fixed-point range");
    out.alpha.push_back(static_cast<std::uint32_t>(a));
  }
  return out;
}

SmoothDivisor SmoothDivisor::identity(std::size_t n) {
  SmoothDivisor out;
  out.alpha.assign(n, std::uint32_t{1} << kShift);
  return out;
}

std::vector<std::uint32_t> di_sigmoid(std::span<const std::int64_t> x, DyadicScale scale,
                                      std::uint32_t ratio_bits) {
  // sigma(z) = e^{min(z,0)} / (e^{min(z,0)} + e^{-max(z,0)}): both exponents
  // are non-positive and one of them is always e^0.
  const DiExpParams ep = di_exp_params(scale);
  std::vector<std::uint32_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::int64_t z = x[i];
    const std::int64_t e_delta = di_exp(std::min<std::int64_t>(z, 0), ep);
    const std::int64_t e_negmax = di_exp(-std::max<std::int64_t>(z, 0), ep);
    out[i] = static_cast<std::uint32_t>(
        int_div(static_cast<std::uint64_t>(e_delta),
                static_cast<std::uint64_t>(e_delta + e_negmax), ratio_bits));
  }
  return out;
}

QuantTensor di_swiglu(const QuantTensor& gate, const QuantTensor& up,
                      const SmoothDivisor& smooth, int out_bits) {
  check_out_bits(out_bits);
  require(gate.shape() == up.shape() && gate.shape().size() == 2,
          "di_swiglu: gate and up must share a rank-2 shape");
  require(gate.granularity() != Granularity::PerChannel &&
              up.granularity() != Granularity::PerChannel,
          "di_swiglu: gate and up must be per-token or per-tensor");
  const std::size_t T = gate.rows(), D = gate.cols();
  require(smooth.alpha.size() == D, "di_swiglu: smoothing length mismatch");
  for (std::uint32_t a : smooth.alpha) require(a > 0, "di_swiglu: smoothing factor must be > 0");
  constexpr std::uint32_t kRatioBits = 8;

  IntAccumulator acc;
  acc.rows = T;
  acc.cols = D;
  acc.data.assign(T * D, 0);
  acc.mantissa.resize(T);
  acc.shift.resize(T);
  std::vector<std::int64_t> xs(D);
  for (std::size_t t = 0; t < T; ++t) {
    const DyadicScale sg = gate.scale_at(t, 0), su = up.scale_at(t, 0);
    const std::uint64_t k_out = std::uint64_t{sg.k} + su.k + kRatioBits - 1;
    if (k_out > 63) {
      throw NumericalError("di_swiglu: output shift " + std::to_string(k_out) +
                           " exceeds 63; rescale gate/up inputs");
    }
    acc.mantissa[t] = static_cast<std::uint64_t>(sg.m) * su.m;
    acc.shift[t] = static_cast<std::uint32_t>(k_out);
    if (sg.m == 0 || su.m == 0) continue;
    // Sigmoid argument gate / s on the scale (m_g, k_g + 8).
    for (std::size_t c = 0; c < D; ++c) {
      const i128 num = static_cast<i128>(gate.centered(t, c))
                       << (SmoothDivisor::kShift + kExpRefineBits);
      xs[c] = static_cast<std::int64_t>(round_div(num, static_cast<i128>(smooth.alpha[c])));
    }
    const std::vector<std::uint32_t> ratio =
        di_sigmoid(xs, {sg.m, sg.k + kExpRefineBits}, kRatioBits);
    for (std::size_t c = 0; c < D; ++c) {
      acc.data[t * D + c] = static_cast<std::int64_t>(gate.centered(t, c)) * ratio[c] *
                            up.centered(t, c);
    }
  }
  return requantize(acc, out_bits, Granularity::PerToken);
}

}  // namespace iqk
