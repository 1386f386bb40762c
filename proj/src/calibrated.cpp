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

#include "iqkernel/calibrated.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "iqkernel/di_matmul.hpp"
#include "iqkernel/error.hpp"
#include "iqkernel/trace.hpp"

namespace iqk {

namespace {

void merge_range(ChannelRange& r, const FloatTensor& t) {
  if (r.lo.empty()) {
    r.lo.assign(t.cols(), std::numeric_limits<float>::infinity());
    r.hi.assign(t.cols(), -std::numeric_limits<float>::infinity());
  }
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t c = 0; c < t.cols(); ++c) {
      r.lo[c] = std::min(r.lo[c], t.at(i, c));
      r.hi[c] = std::max(r.hi[c], t.at(i, c));
    }
}

void check_range(const ChannelRange& r, std::size_t d, const char* name) {
  require(r.lo.size() == d && r.hi.size() == d,
          std::string(name) + " range must have d_model entries");
}

}  // namespace

void measure_norm_ranges(const BlockWeights& w, const std::vector<FloatTensor>& calib,
                         ChannelRange& norm1, ChannelRange& norm2) {
  require(!calib.empty(), "calibration set is empty");
  norm1 = {};
  norm2 = {};
  for (const auto& x : calib) {
    FloatProbe probe;
    float_forward(w, x, &probe);
    merge_range(norm1, probe.at("input"));
    merge_range(norm2, probe.at("resid1"));
  }
}

CalibratedBlock build_calibrated(const BlockWeights& reference, const SmoothingSet& smoothing,
                                 const QConfig& q, const ClipConfig& clip,
                                 const ChannelRange& norm1_range,
                                 const ChannelRange& norm2_range) {
  IQK_TRACE_FLOAT("build_calibrated", 1);
  q.validate();
  reference.validate();
  const std::size_t d = reference.dims.d_model;
  check_range(norm1_range, d, "norm1 input");
  check_range(norm2_range, d, "norm2 input");

  CalibratedBlock cb;
  cb.qconfig = q;
  cb.clip = clip;
  cb.reference = reference;
  cb.smoothing = smoothing;
  cb.norm1_range = norm1_range;
  cb.norm2_range = norm2_range;
  cb.folded = apply_smoothing(reference, smoothing);

  FloatTensor wq = cb.folded.wq;
  const float qs =
      static_cast<float>(1.0 / std::sqrt(static_cast<double>(reference.dims.head_dim())));
  for (float& v : wq.data()) v *= qs;
  const auto qw = [&](const FloatTensor& t) {
    return quantize(t, q.wbits, Granularity::PerChannel);
  };
  cb.wq = qw(wq);
  cb.wk = qw(cb.folded.wk);
  cb.wv = qw(cb.folded.wv);
  cb.wo = qw(cb.folded.wo);
  cb.w_gate = qw(cb.folded.w_gate);
  cb.w_up = qw(cb.folded.w_up);
  cb.w_down = qw(cb.folded.w_down);
  cb.norm1 = IntNormParams::from(cb.folded.norm1);
  cb.norm2 = IntNormParams::from(cb.folded.norm2);
  cb.swiglu = SmoothDivisor::from(cb.folded.swiglu_divisor);
  cb.norm1_input = params_from_range(norm1_range.lo, norm1_range.hi, 8);
  cb.norm2_input = params_from_range(norm2_range.lo, norm2_range.hi, 8);
  return cb;
}

CalibratedBlock calibrate(const BlockWeights& block, const std::vector<FloatTensor>& calib,
                          const QConfig& q, const ReconstructionConfig& rcfg,
                          const ClipConfig& clip, bool fsbr) {
  require(!calib.empty(), "calibration set is empty");
  ReconstructionResult rr;
  if (fsbr) {
    rr = fsbr_reconstruct(block, calib, q, rcfg);
  } else {
    rr.smoothing = identity_smoothing(block.dims);
  }
  const std::vector<FloatTensor> used(calib.begin(),
                                      calib.begin() + std::min(rcfg.samples, calib.size()));
  ChannelRange r1, r2;
  measure_norm_ranges(block, used, r1, r2);
  CalibratedBlock cb = build_calibrated(block, rr.smoothing, q, clip, r1, r2);
  cb.initial_loss = rr.initial_loss;
  cb.final_loss = rr.final_loss;
  cb.steps_run = rr.steps_run;
  cb.seed = rcfg.seed;
  return cb;
}

FloatProbe IntProbe::dequantized() const {
  FloatProbe out;
  for (const auto& [name, parts] : taps) {
    std::vector<float> data;
    std::size_t rows = 0, cols = 0;
    for (const auto& q : parts) {
      const FloatTensor f = dequantize(q);
      data.insert(data.end(), f.data().begin(), f.data().end());
      rows += f.rows();
      cols = f.cols();
    }
    out[name] = FloatTensor({rows, cols}, std::move(data));
  }
  return out;
}

FloatTensor int_forward(const CalibratedBlock& cb, const FloatTensor& x,
                        const IntForwardOptions& opt) {
  const BlockDims& dims = cb.reference.dims;
  const std::size_t d = dims.d_model, H = dims.n_heads, dh = dims.head_dim();
  require(x.rank() == 2 && x.cols() == d,
          "input must be [tokens, " + std::to_string(d) + "], got " + shape_str(x.shape()));
  require(x.rows() > 0, "input has no tokens");
  const int ab = cb.qconfig.abits;
  const Granularity ag = cb.qconfig.act_granularity;
  auto tap = [&](const char* name, const QuantTensor& q) {
    if (opt.probe) opt.probe->taps[name].push_back(q);
  };

  // Boundary: the only float -> integer conversion.
  const QuantTensor xq = opt.per_channel_norm_input
                             ? quantize_static(x, 8, Granularity::PerChannel, cb.norm1_input)
                             : quantize(x, 8, Granularity::PerToken);
  IntAccumulator out;
  {
    trace::IntegerRegion region;
    tap("input", xq);
    const QuantTensor h = di_rmsnorm(xq, cb.norm1, ab);
    tap("norm1", h);
    const QuantTensor q = di_matmul(h, cb.wq, ab, ag);
    const QuantTensor k = di_matmul(h, cb.wk, ab, ag);
    const QuantTensor v = di_matmul(h, cb.wv, ab, Granularity::PerToken);
    tap("q", q);
    tap("k", k);
    tap("v", v);

    ClipConfig clip = cb.clip;
    clip.enabled = clip.enabled && opt.clip;
    std::vector<IntAccumulator> heads;
    heads.reserve(H);
    for (std::size_t hd = 0; hd < H; ++hd) {
      const QuantTensor qh = slice_cols(q, hd * dh, (hd + 1) * dh);
      const QuantTensor kt = transpose(slice_cols(k, hd * dh, (hd + 1) * dh));
      IntAccumulator logits = int_gemm(qh, kt);
      const QuantTensor p = di_clipped_softmax(logits, clip, 8, /*causal=*/true);
      if (opt.probe) opt.probe->logits.push_back(std::move(logits));
      tap("softmax", p);
      heads.push_back(int_gemm(p, slice_cols(v, hd * dh, (hd + 1) * dh)));
    }
    const QuantTensor attn = requantize(concat_cols(heads), ab, ag);
    tap("attn", attn);
    const QuantTensor ao = di_matmul(attn, cb.wo, 8, ag);
    tap("attn_out", ao);

    const IntAccumulator r1 = residual_add(to_accumulator(xq), to_accumulator(ao));
    const QuantTensor x1 = opt.per_channel_norm_input
                               ? requantize_static(r1, 8, cb.norm2_input)
                               : requantize(r1, 8, Granularity::PerToken);
    tap("resid1", x1);
    const QuantTensor h2 = di_rmsnorm(x1, cb.norm2, ab);
    tap("norm2", h2);
    const QuantTensor g = di_matmul(h2, cb.w_gate, 8, ag);
    const QuantTensor u = di_matmul(h2, cb.w_up, 8, ag);
    tap("gate", g);
    tap("up", u);
    const QuantTensor a = di_swiglu(g, u, cb.swiglu, ab);
    tap("swiglu", a);
    const QuantTensor f = di_matmul(a, cb.w_down, 8, ag);
    tap("ffn_out", f);
    out = residual_add(to_accumulator(x1), to_accumulator(f));
  }
  return dequantize(out);
}

}  // namespace iqk
