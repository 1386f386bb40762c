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

#include "iqkernel/di_matmul.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "iqkernel/error.hpp"
#include "iqkernel/trace.hpp"

namespace iqk {

namespace {

constexpr std::uint32_t kMaxAlignShift = 30;

std::int64_t checked_i64(i128 v, const char* what) {
  if (v > std::numeric_limits<std::int64_t>::max() ||
      v < std::numeric_limits<std::int64_t>::min()) {
    throw NumericalError(std::string(what) + ": value overflows 64 bits");
  }
  return static_cast<std::int64_t>(v);
}

std::int64_t saturate_i64(i128 v) {
  constexpr auto hi = std::numeric_limits<std::int64_t>::max();
  constexpr auto lo = std::numeric_limits<std::int64_t>::min();
  return static_cast<std::int64_t>(std::clamp<i128>(v, lo, hi));
}

void check_out_bits(int bits) {
  require(bits == 4 || bits == 6 || bits == 8,
          "out_bits must be 4, 6 or 8 (got " + std::to_string(bits) + ")");
}

// Largest k over the scales, used as the common base for mantissa alignment.
std::uint32_t max_shift(const std::vector<DyadicScale>& scales) {
  std::uint32_t k = 0;
  for (const auto& s : scales) {
    if (s.m != 0) k = std::max(k, s.k);
  }
  return k;
}

std::uint64_t aligned_mantissa(const DyadicScale& s, std::uint32_t base) {
  if (s.m == 0) return 0;
  const std::uint32_t sh = base - s.k;
  if (sh > kMaxAlignShift) {
    throw NumericalError("scale alignment shift " + std::to_string(sh) +
                         " exceeds " + std::to_string(kMaxAlignShift) +
                         " bits; scales too far apart");
  }
  return static_cast<std::uint64_t>(s.m) << sh;
}

// Closed-form dyadic solve for one group of accumulator values sharing the
// real scale M / 2^K. Writes codes for the group and returns its parameters.
struct GroupSolve {
  DyadicScale scale;
  std::int32_t zp = 0;
};

GroupSolve solve_group(std::span<const i128> p, std::uint64_t M, std::uint32_t K,
                       std::uint32_t n, std::span<std::uint8_t> out,
                       DiMatMulInfo* info) {
  i128 pmax = p[0], pmin = p[0];
  for (i128 v : p) {
    pmax = std::max(pmax, v);
    pmin = std::min(pmin, v);
  }
  if (info) ++info->scale_solves;
  if (pmax == pmin) {
    if (info) ++info->degenerate;
    if (pmax == 0 || M == 0) {
      std::fill(out.begin(), out.end(), std::uint8_t{0});
      return {{0, 0}, 0};
    }
    // A nonzero constant: one code above (or below) the zero-point at a step
    // equal to the constant's magnitude.
    const i128 mag = pmax < 0 ? -pmax : pmax;
    if (K > 118) throw NumericalError("requantize: accumulator shift too large");
    const DyadicScale s =
        fit_dyadic_wide(static_cast<u128>(mag) * M, static_cast<u128>(1) << K);
    std::fill(out.begin(), out.end(), static_cast<std::uint8_t>(pmax > 0 ? 1 : 0));
    return {s, pmax > 0 ? 0 : 1};
  }
  const i128 range = pmax - pmin;
  const DyadicScale scale = output_scale(range, M, K, n);
  const i128 zp = round_div(-pmin * n, range);
  if (zp > std::numeric_limits<std::int32_t>::max() ||
      zp < std::numeric_limits<std::int32_t>::min()) {
    throw NumericalError("requantize: zero-point overflows 32 bits");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(round_div((p[i] - pmin) * n, range));
  }
  return {scale, static_cast<std::int32_t>(zp)};
}

}  // namespace

DyadicScale output_scale(i128 range, std::uint64_t M, std::uint32_t K, std::uint32_t n) {
  require(range > 0 && n > 0, "output_scale: range and n must be positive");
  // k_y = floor(log2(n * 2^(K + 8) / range)), the mantissa left at 256.
  if (K + 8 > 110) throw NumericalError("requantize: accumulator shift too large");
  const i128 ratio = (static_cast<i128>(n) << (K + 8)) / range;
  std::int64_t ky =
      ratio > 0 ? static_cast<std::int64_t>(floor_log2_wide(static_cast<u128>(ratio))) : -1;
  ky = std::min<std::int64_t>(ky, 255);
  // m_y = round(range * M / n >> (K - k_y)); a negative shift goes left.
  // The factor M can push m_y past 255, in which case k_y steps down.
  const u128 rm = static_cast<u128>(range) * M;
  for (;;) {
    if (ky < 0) throw NumericalError("requantize: output scale exceeds 255");
    u128 num = rm, den = n;
    if (ky >= static_cast<std::int64_t>(K)) {
      const auto sh = static_cast<std::uint32_t>(ky - K);
      if (sh > 100) throw NumericalError("requantize: shift overflow");
      num = rm << sh;
    } else {
      den = static_cast<u128>(n) << (K - ky);
    }
    const u128 m = (2 * num + den) / (2 * den);
    if (m <= 255) {
      return {static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(ky)};
    }
    --ky;
  }
}

double IntAccumulator::row_scale(std::size_t r) const {
  IQK_TRACE_FLOAT("IntAccumulator::row_scale", 1);
  return std::ldexp(static_cast<double>(mantissa[r]), -static_cast<int>(shift[r]));
}

IntAccumulator int_gemm(const QuantTensor& x1, const QuantTensor& x2) {
  require(x1.shape().size() == 2 && x2.shape().size() == 2,
          "di_matmul: rank-2 operands required");
  require(x1.cols() == x2.rows(),
          "di_matmul: inner dimensions differ (" + shape_str(x1.shape()) + " x " +
              shape_str(x2.shape()) + ")");
  const std::size_t M = x1.rows(), D = x1.cols(), N = x2.cols();

  // Scales that vary along the inner dimension (x1 per-channel, x2 per-token)
  // or along output columns (x2 per-channel) are aligned to their largest
  // shift and multiplied into the integer operands, leaving one scale per
  // output row. Alignment is exact.
  std::vector<std::int64_t> a1(D, 1), w(D * N);
  std::uint64_t m1_common = 0;
  std::uint32_t k1_common = 0;
  const bool x1_inner = x1.granularity() == Granularity::PerChannel;
  if (x1_inner) {
    k1_common = max_shift(x1.scales());
    for (std::size_t l = 0; l < D; ++l)
      a1[l] = static_cast<std::int64_t>(aligned_mantissa(x1.scales()[l], k1_common));
    m1_common = 1;
  }
  std::uint64_t m2 = 1;
  std::uint32_t k2 = 0;
  bool aligned = x1_inner;
  switch (x2.granularity()) {
    case Granularity::PerTensor:
      m2 = x2.scales()[0].m;
      k2 = x2.scales()[0].k;
      for (std::size_t l = 0; l < D; ++l)
        for (std::size_t j = 0; j < N; ++j) w[l * N + j] = x2.centered(l, j);
      break;
    case Granularity::PerChannel: {
      k2 = max_shift(x2.scales());
      std::vector<std::int64_t> al(N);
      for (std::size_t j = 0; j < N; ++j)
        al[j] = static_cast<std::int64_t>(aligned_mantissa(x2.scales()[j], k2));
      for (std::size_t l = 0; l < D; ++l)
        for (std::size_t j = 0; j < N; ++j) w[l * N + j] = x2.centered(l, j) * al[j];
      aligned = true;
      break;
    }
    case Granularity::PerToken: {
      k2 = max_shift(x2.scales());
      for (std::size_t l = 0; l < D; ++l) {
        const auto al = static_cast<std::int64_t>(aligned_mantissa(x2.scales()[l], k2));
        for (std::size_t j = 0; j < N; ++j) w[l * N + j] = x2.centered(l, j) * al;
      }
      aligned = true;
      break;
    }
  }

  IntAccumulator acc;
  acc.rows = M;
  acc.cols = N;
  acc.data.assign(M * N, 0);
  std::vector<std::int64_t> a(D);
  if (!aligned) {
    // Plain 8-bit operands: |sum| <= D * 255^2 fits comfortably in 64 bits.
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t l = 0; l < D; ++l) a[l] = x1.centered(i, l);
      std::int64_t* row = acc.data.data() + i * N;
      for (std::size_t l = 0; l < D; ++l) {
        const std::int64_t av = a[l];
        if (av == 0) continue;
        const std::int64_t* wr = w.data() + l * N;
        for (std::size_t j = 0; j < N; ++j) row[j] += av * wr[j];
      }
    }
  } else {
    std::vector<i128> row(N);
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t l = 0; l < D; ++l) a[l] = x1.centered(i, l) * a1[l];
      std::fill(row.begin(), row.end(), 0);
      for (std::size_t l = 0; l < D; ++l) {
        const i128 av = a[l];
        if (av == 0) continue;
        const std::int64_t* wr = w.data() + l * N;
        for (std::size_t j = 0; j < N; ++j) row[j] += av * wr[j];
      }
      for (std::size_t j = 0; j < N; ++j) acc.data[i * N + j] = checked_i64(row[j], "di_matmul");
    }
  }

  acc.mantissa.resize(M);
  acc.shift.resize(M);
  for (std::size_t i = 0; i < M; ++i) {
    std::uint64_t m1 = m1_common;
    std::uint32_t k1 = k1_common;
    if (!x1_inner) {
      const DyadicScale s1 = x1.scale_at(i, 0);
      m1 = s1.m;
      k1 = s1.k;
    }
    acc.mantissa[i] = m1 * m2;
    acc.shift[i] = k1 + k2;
  }
  return acc;
}

QuantTensor requantize(const IntAccumulator& acc, int out_bits, Granularity granularity,
                       DiMatMulInfo* info) {
  check_out_bits(out_bits);
  require(granularity != Granularity::PerChannel,
          "requantize: granularity must be per-tensor or per-token");
  require(acc.rows > 0 && acc.cols > 0, "requantize: empty accumulator");
  const std::uint32_t n = level_count(out_bits);
  const std::size_t R = acc.rows, C = acc.cols;
  std::vector<std::uint8_t> codes(R * C);
  QuantParams params;

  if (granularity == Granularity::PerToken) {
    std::vector<i128> p(C);
    for (std::size_t i = 0; i < R; ++i) {
      for (std::size_t j = 0; j < C; ++j) p[j] = acc.at(i, j);
      const GroupSolve g = solve_group(p, acc.mantissa[i], acc.shift[i], n,
                                       std::span(codes).subspan(i * C, C), info);
      params.scale.push_back(g.scale);
      params.zero_point.push_back(g.zp);
    }
  } else {
    // One scale for the tensor: bring every row to the largest shift.
    std::uint32_t K = 0;
    bool uniform = true;
    for (std::size_t i = 0; i < R; ++i) {
      K = std::max(K, acc.shift[i]);
      uniform = uniform && acc.shift[i] == acc.shift[0] &&
                acc.mantissa[i] == acc.mantissa[0];
    }
    std::vector<i128> p(R * C);
    std::uint64_t M = 1;
    if (uniform) {
      for (std::size_t e = 0; e < R * C; ++e) p[e] = acc.data[e];
      M = acc.mantissa[0];
      K = acc.shift[0];
    } else {
      for (std::size_t i = 0; i < R; ++i) {
        const std::uint32_t sh = K - acc.shift[i];
        if (sh > 62) throw NumericalError("requantize: row scales too far apart");
        const i128 f = static_cast<i128>(acc.mantissa[i]) << sh;
        for (std::size_t j = 0; j < C; ++j) {
          const i128 v = static_cast<i128>(acc.at(i, j)) * f;
          if (v > (static_cast<i128>(1) << 100) || v < -(static_cast<i128>(1) << 100)) {
            throw NumericalError("requantize: aligned value overflows");
          }
          p[i * C + j] = v;
        }
      }
    }
    const GroupSolve g = solve_group(p, M, K, n, codes, info);
    params.scale.push_back(g.scale);
    params.zero_point.push_back(g.zp);
  }
  return QuantTensor({R, C}, std::move(codes), out_bits, granularity, std::move(params));
}

QuantTensor requantize_static(const IntAccumulator& acc, int out_bits,
                              const QuantParams& per_column) {
  check_out_bits(out_bits);
  require(per_column.scale.size() == acc.cols && per_column.zero_point.size() == acc.cols,
          "requantize_static: need one scale per column");
  const std::int64_t n = level_count(out_bits);
  const std::size_t R = acc.rows, C = acc.cols;
  std::vector<std::uint8_t> codes(R * C);
  for (std::size_t j = 0; j < C; ++j) {
    const DyadicScale& s = per_column.scale[j];
    const std::int64_t zp = per_column.zero_point[j];
    for (std::size_t i = 0; i < R; ++i) {
      std::int64_t code = zp;
      if (s.m != 0) {
        // value * M / 2^K divided by m_c / 2^k_c.
        const std::uint32_t K = acc.shift[i];
        i128 num = static_cast<i128>(acc.at(i, j)) * static_cast<i128>(acc.mantissa[i]);
        i128 den = static_cast<i128>(s.m);
        if (s.k >= K) {
          if (s.k - K > 60) throw NumericalError("requantize_static: shift overflow");
          num <<= (s.k - K);
        } else {
          if (K - s.k > 100) throw NumericalError("requantize_static: shift overflow");
          den <<= (K - s.k);
        }
        const i128 q = round_div(num, den);
        code = static_cast<std::int64_t>(std::clamp<i128>(q + zp, 0, n));
      }
      codes[i * C + j] = static_cast<std::uint8_t>(std::clamp<std::int64_t>(code, 0, n));
    }
  }
  return QuantTensor({R, C}, std::move(codes), out_bits, Granularity::PerChannel,
                     per_column);
}

QuantTensor di_matmul(const QuantTensor& x1, const QuantTensor& x2, int out_bits,
                      Granularity granularity, DiMatMulInfo* info) {
  check_out_bits(out_bits);
  return requantize(int_gemm(x1, x2), out_bits, granularity, info);
}

IntAccumulator to_accumulator(const QuantTensor& q) {
  require(q.shape().size() == 2, "to_accumulator: rank-2 tensor required");
  const std::size_t R = q.rows(), C = q.cols();
  IntAccumulator acc;
  acc.rows = R;
  acc.cols = C;
  acc.data.resize(R * C);
  acc.mantissa.assign(R, 1);
  acc.shift.assign(R, 0);
  if (q.granularity() == Granularity::PerChannel) {
    const std::uint32_t K = max_shift(q.scales());
    std::vector<std::uint64_t> align(C);
    for (std::size_t j = 0; j < C; ++j) align[j] = aligned_mantissa(q.scales()[j], K);
    for (std::size_t i = 0; i < R; ++i) {
      acc.shift[i] = K;
      for (std::size_t j = 0; j < C; ++j)
        acc.data[i * C + j] = static_cast<std::int64_t>(q.centered(i, j)) *
                              static_cast<std::int64_t>(align[j]);
    }
  } else {
    for (std::size_t i = 0; i < R; ++i) {
      const DyadicScale s = q.scale_at(i, 0);
      acc.mantissa[i] = s.m;
      acc.shift[i] = s.k;
      for (std::size_t j = 0; j < C; ++j) acc.data[i * C + j] = q.centered(i, j);
    }
  }
  return acc;
}

IntAccumulator residual_add(const IntAccumulator& a, const IntAccumulator& b) {
  require(a.rows == b.rows && a.cols == b.cols, "residual_add: shape mismatch");
  IntAccumulator out;
  out.rows = a.rows;
  out.cols = a.cols;
  out.data.resize(a.data.size());
  out.mantissa.assign(a.rows, 1);
  out.shift.resize(a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const std::uint32_t K = std::max(a.shift[i], b.shift[i]);
    const std::uint32_t sa = K - a.shift[i], sb = K - b.shift[i];
    if (sa > 62 || sb > 62) throw NumericalError("residual_add: scales too far apart");
    const i128 fa = static_cast<i128>(a.mantissa[i]) << sa;
    const i128 fb = static_cast<i128>(b.mantissa[i]) << sb;
    out.shift[i] = K;
    for (std::size_t j = 0; j < a.cols; ++j) {
      const std::size_t e = i * a.cols + j;
      out.data[e] = saturate_i64(saturate_i64(a.data[e] * fa) +
                                 static_cast<i128>(saturate_i64(b.data[e] * fb)));
    }
  }
  return out;
}

IntAccumulator concat_cols(const std::vector<IntAccumulator>& parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  IntAccumulator out;
  out.rows = parts[0].rows;
  out.mantissa = parts[0].mantissa;
  out.shift = parts[0].shift;
  for (const auto& p : parts) {
    require(p.rows == out.rows && p.mantissa == out.mantissa && p.shift == out.shift,
            "concat_cols: parts must share row scales");
    out.cols += p.cols;
  }
  out.data.resize(out.rows * out.cols);
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < out.rows; ++i)
      std::copy_n(p.data.begin() + i * p.cols, p.cols, out.data.begin() + i * out.cols + c0);
    c0 += p.cols;
  }
  return out;
}

QuantTensor slice_cols(const QuantTensor& q, std::size_t begin, std::size_t end) {
  require(q.shape().size() == 2 && begin < end && end <= q.cols(),
          "slice_cols: invalid column range");
  const std::size_t R = q.rows(), W = end - begin;
  std::vector<std::uint8_t> data(R * W);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < W; ++j) data[i * W + j] = q.at(i, begin + j);
  QuantParams p = q.params();
  if (q.granularity() == Granularity::PerChannel) {
    p.scale = {q.scales().begin() + begin, q.scales().begin() + end};
    p.zero_point = {q.zero_points().begin() + begin, q.zero_points().begin() + end};
  }
  return QuantTensor({R, W}, std::move(data), q.bits(), q.granularity(), std::move(p));
}

FloatTensor dequantize(const IntAccumulator& acc) {
  IQK_TRACE_FLOAT("dequantize(IntAccumulator)", acc.data.size());
  std::vector<float> out(acc.data.size());
  for (std::size_t i = 0; i < acc.rows; ++i) {
    const double s =
        std::ldexp(static_cast<double>(acc.mantissa[i]), -static_cast<int>(acc.shift[i]));
    for (std::size_t j = 0; j < acc.cols; ++j)
      out[i * acc.cols + j] = static_cast<float>(static_cast<double>(acc.at(i, j)) * s);
  }
  return FloatTensor({acc.rows, acc.cols}, std::move(out));
}

}  // namespace iqk
