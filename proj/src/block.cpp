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

#include "iqkernel/block.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iqkernel/error.hpp"
#include "iqkernel/trace.hpp"

namespace iqk {

void BlockDims::validate() const {
  require(d_model > 0 && n_heads > 0 && d_ffn > 0, "block dims must be positive");
  require(d_model % n_heads == 0, "head count must divide d_model");
}

namespace {

void check_shape(const FloatTensor& t, std::size_t r, std::size_t c, const char* name) {
  require(t.rank() == 2 && t.rows() == r && t.cols() == c,
          std::string(name) + " must be [" + std::to_string(r) + ", " +
              std::to_string(c) + "], got " + shape_str(t.shape()));
}

}  // namespace

void BlockWeights::validate() const {
  dims.validate();
  const std::size_t d = dims.d_model, f = dims.d_ffn;
  check_shape(wq, d, d, "wq");
  check_shape(wk, d, d, "wk");
  check_shape(wv, d, d, "wv");
  check_shape(wo, d, d, "wo");
  check_shape(w_gate, d, f, "w_gate");
  check_shape(w_up, d, f, "w_up");
  check_shape(w_down, f, d, "w_down");
  require(norm1.gamma.size() == d && norm2.gamma.size() == d,
          "norm gamma length must equal d_model");
  require(swiglu_divisor.size() == f, "swiglu divisor length must equal d_ffn");
  for (float s : swiglu_divisor) require(s > 0.0f, "swiglu divisor must be > 0");
}

std::string QConfig::name() const {
  return "W" + std::to_string(wbits) + "A" + std::to_string(abits);
}

void QConfig::validate() const {
  auto ok = [](int b) { return b == 4 || b == 6 || b == 8; };
  require(ok(wbits), "wbits must be 4, 6 or 8");
  require(ok(abits), "abits must be 4, 6 or 8");
  require(act_granularity != Granularity::PerChannel,
          "activation granularity must be per-tensor or per-token");
}

const std::vector<std::string>& probe_points() {
  static const std::vector<std::string> names = {
      "input", "norm1", "q",     "k",  "v",      "softmax", "attn",   "attn_out",
      "resid1", "norm2", "gate", "up", "swiglu", "ffn_out", "output"};
  return names;
}

FloatTensor float_softmax(const FloatTensor& scores, bool causal) {
  IQK_TRACE_FLOAT("softmax(float)", 3 * scores.size());
  require(scores.rank() == 2 && scores.cols() > 0, "softmax: rank-2 input required");
  const std::size_t T = scores.rows(), S = scores.cols();
  require(!causal || S >= T, "softmax: causal mask needs cols >= rows");
  FloatTensor p({T, S});
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t vis = causal ? i + (S - T) + 1 : S;
    float mx = scores.at(i, 0);
    for (std::size_t j = 0; j < vis; ++j) mx = std::max(mx, scores.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < vis; ++j) sum += std::exp(static_cast<double>(scores.at(i, j) - mx));
    for (std::size_t j = 0; j < vis; ++j)
      p.at(i, j) = static_cast<float>(std::exp(static_cast<double>(scores.at(i, j) - mx)) / sum);
  }
  return p;
}

FloatTensor fake_quant(const FloatTensor& x, int bits, Granularity g) {
  return dequantize(quantize(x, bits, g));
}

namespace {

FloatTensor rmsnorm(const FloatTensor& x, const NormParams& p) {
  IQK_TRACE_FLOAT("rmsnorm(float)", 4 * x.size());
  const std::size_t T = x.rows(), D = x.cols();
  FloatTensor y({T, D});
  for (std::size_t t = 0; t < T; ++t) {
    double ss = 0.0;
    for (float v : x.row(t)) ss += static_cast<double>(v) * v;
    const double ms = ss / static_cast<double>(D);
    if (ms == 0.0) continue;
    const double inv = 1.0 / std::sqrt(ms);
    for (std::size_t c = 0; c < D; ++c) {
      double v = x.at(t, c) * inv * p.gamma[c];
      if (!p.beta.empty()) v += p.beta[c];
      y.at(t, c) = static_cast<float>(v);
    }
  }
  return y;
}

// Columns [c0, c0 + w) of a 2-D tensor.
FloatTensor cols_of(const FloatTensor& x, std::size_t c0, std::size_t w) {
  FloatTensor y({x.rows(), w});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < w; ++c) y.at(r, c) = x.at(r, c0 + c);
  return y;
}

// Shared pipeline. `tap(name, tensor, bits, granularity)` may record or
// replace the tensor; bits == 0 marks points that are never requantized.
template <class Tap>
FloatTensor forward_impl(const BlockWeights& w, const FloatTensor& x_in, Tap&& tap) {
  w.validate();
  const std::size_t d = w.dims.d_model, H = w.dims.n_heads, dh = w.dims.head_dim();
  require(x_in.rank() == 2 && x_in.cols() == d,
          "input must be [tokens, " + std::to_string(d) + "], got " + shape_str(x_in.shape()));
  const std::size_t T = x_in.rows();
  IQK_TRACE_FLOAT("block forward(float)", T * d);

  FloatTensor x = x_in;
  tap("input", x, 8, Granularity::PerChannel);
  FloatTensor h = rmsnorm(x, w.norm1);
  tap("norm1", h, -1, Granularity::PerToken);
  FloatTensor q = matmul(h, w.wq);
  const float qscale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));
  for (float& v : q.data()) v *= qscale;
  FloatTensor k = matmul(h, w.wk);
  FloatTensor v = matmul(h, w.wv);
  tap("q", q, -1, Granularity::PerToken);
  tap("k", k, -1, Granularity::PerToken);
  tap("v", v, -1, Granularity::PerToken);

  FloatTensor attn({T, d});
  FloatTensor probs({H * T, T});
  for (std::size_t hd = 0; hd < H; ++hd) {
    const FloatTensor qh = cols_of(q, hd * dh, dh);
    const FloatTensor kh = cols_of(k, hd * dh, dh);
    const FloatTensor vh = cols_of(v, hd * dh, dh);
    FloatTensor scores = matmul(qh, transpose(kh));
    tap("scores_head", scores, 0, Granularity::PerToken);
    FloatTensor p = float_softmax(scores, /*causal=*/true);
    tap("softmax_head", p, 0, Granularity::PerToken);
    std::copy(p.data().begin(), p.data().end(), probs.data().begin() + hd * T * T);
    const FloatTensor o = matmul(p, vh);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < dh; ++c) attn.at(t, hd * dh + c) = o.at(t, c);
  }
  tap("softmax", probs, 0, Granularity::PerToken);
  tap("attn", attn, -1, Granularity::PerToken);
  FloatTensor ao = matmul(attn, w.wo);
  tap("attn_out", ao, 8, Granularity::PerToken);
  FloatTensor x1 = add(x, ao);
  tap("resid1", x1, 8, Granularity::PerChannel);

  FloatTensor h2 = rmsnorm(x1, w.norm2);
  tap("norm2", h2, -1, Granularity::PerToken);
  FloatTensor g = matmul(h2, w.w_gate);
  FloatTensor u = matmul(h2, w.w_up);
  tap("gate", g, 8, Granularity::PerToken);
  tap("up", u, 8, Granularity::PerToken);
  FloatTensor a({T, w.dims.d_ffn});
  IQK_TRACE_FLOAT("swiglu(float)", 5 * a.size());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < w.dims.d_ffn; ++c) {
      const double gv = g.at(t, c);
      const double z = gv / w.swiglu_divisor[c];
      const double sig = 1.0 / (1.0 + std::exp(-z));
      a.at(t, c) = static_cast<float>(gv * sig * u.at(t, c));
    }
  }
  tap("swiglu", a, -1, Granularity::PerToken);
  FloatTensor f = matmul(a, w.w_down);
  tap("ffn_out", f, 8, Granularity::PerToken);
  FloatTensor y = add(x1, f);
  tap("output", y, 0, Granularity::PerToken);
  return y;
}

}  // namespace

FloatTensor float_forward(const BlockWeights& w, const FloatTensor& x, FloatProbe* probe) {
  return forward_impl(w, x, [&](const char* name, FloatTensor& t, int, Granularity) {
    const std::string n = name;
    if (probe && n != "softmax_head" && n != "scores_head") (*probe)[n] = t;
  });
}

BlockWeights fake_quantize_weights(const BlockWeights& w, int wbits) {
  BlockWeights out = w;
  for (FloatTensor* t : {&out.wq, &out.wk, &out.wv, &out.wo, &out.w_gate, &out.w_up,
                         &out.w_down}) {
    *t = fake_quant(*t, wbits, Granularity::PerChannel);
  }
  return out;
}

FloatTensor sim_forward_prequantized(const BlockWeights& wq, const FloatTensor& x,
                                     const QConfig& q, bool quantize_softmax_input) {
  q.validate();
  return forward_impl(wq, x, [&](const char* name, FloatTensor& t, int bits, Granularity g) {
    const std::string n = name;
    if (n == "scores_head") {
      if (quantize_softmax_input) t = fake_quant(t, 8, Granularity::PerToken);
      return;
    }
    if (n == "softmax_head") {
      // Probabilities land on the 1/128 grid of the integer softmax output.
      IQK_TRACE_FLOAT("sim softmax grid", t.size());
      for (float& v : t.data()) v = std::round(v * 128.0f) / 128.0f;
      return;
    }
    if (bits == 0) return;
    if (n == "v") {
      t = fake_quant(t, q.abits, Granularity::PerToken);
      return;
    }
    const int b = bits < 0 ? q.abits : bits;
    const Granularity gg = g == Granularity::PerChannel ? g : q.act_granularity;
    t = fake_quant(t, b, gg);
  });
}

FloatTensor sim_forward(const BlockWeights& w, const FloatTensor& x, const QConfig& q) {
  return sim_forward_prequantized(fake_quantize_weights(w, q.wbits), x, q);
}

}  // namespace iqk
