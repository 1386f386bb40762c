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

#include "iqkernel/fsbr.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iqkernel/error.hpp"
#include "iqkernel/rng.hpp"
#include "iqkernel/trace.hpp"

namespace iqk {

const char* paradigm_name(Paradigm p) {
  switch (p) {
    case Paradigm::SerialLinearNorm: return "serial-linear-norm";
    case Paradigm::SerialLinearLinear: return "serial-linear-linear";
    case Paradigm::ParallelLinearLinear: return "parallel-linear-linear";
    case Paradigm::NonLinearActSmooth: return "nonlinear-act-smooth";
  }
  return "?";
}

Paradigm parse_paradigm(const std::string& s) {
  for (Paradigm p : {Paradigm::SerialLinearNorm, Paradigm::SerialLinearLinear,
                     Paradigm::ParallelLinearLinear, Paradigm::NonLinearActSmooth}) {
    if (s == paradigm_name(p)) return p;
  }
  throw ValidationError("unknown smoothing paradigm '" + s + "'");
}

void SmoothingVector::validate() const {
  require(!s.empty(), "smoothing vector '" + site + "' is empty");
  for (float v : s) {
    require(std::isfinite(v) && v > 0.0f,
            "smoothing vector '" + site + "' has a non-positive entry");
  }
}

namespace {

void scale_rows(FloatTensor& w, const std::vector<float>& s, bool divide) {
  IQK_TRACE_FLOAT("fold scale_rows", w.size());
  require(w.rank() == 2 && w.rows() == s.size(), "fold: smoothing length must equal rows (" +
                                                     std::to_string(s.size()) + " vs " +
                                                     shape_str(w.shape()) + ")");
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (float& v : w.row(r)) v = divide ? v / s[r] : v * s[r];
}

void scale_cols(FloatTensor& w, const std::vector<float>& s, bool divide) {
  IQK_TRACE_FLOAT("fold scale_cols", w.size());
  require(w.rank() == 2 && w.cols() == s.size(), "fold: smoothing length must equal columns (" +
                                                     std::to_string(s.size()) + " vs " +
                                                     shape_str(w.shape()) + ")");
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto row = w.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = divide ? row[c] / s[c] : row[c] * s[c];
  }
}

void scale_vec(FloatTensor& b, const std::vector<float>& s, bool divide) {
  if (b.empty()) return;
  require(b.size() == s.size(), "fold: bias length must equal smoothing length");
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = divide ? b[i] / s[i] : b[i] * s[i];
}

}  // namespace

NormFold fold_serial_linear_norm(const NormParams& norm, const std::vector<FloatTensor>& next,
                                 const SmoothingVector& s) {
  s.validate();
  require(norm.gamma.size() == s.s.size(), "fold: gamma length must equal smoothing length");
  NormFold out{norm, next};
  for (std::size_t i = 0; i < s.s.size(); ++i) {
    out.norm.gamma[i] /= s.s[i];
    if (!out.norm.beta.empty()) out.norm.beta[i] /= s.s[i];
  }
  for (auto& w : out.next) scale_rows(w, s.s, false);
  return out;
}

LinearLinearFold fold_serial_linear_linear(const FloatTensor& w1, const FloatTensor& b1,
                                           const FloatTensor& w2, const SmoothingVector& s) {
  s.validate();
  LinearLinearFold out{w1, b1, w2};
  scale_cols(out.w1, s.s, true);
  scale_vec(out.b1, s.s, true);
  scale_rows(out.w2, s.s, false);
  return out;
}

ParallelFold fold_parallel_linear_linear(const FloatTensor& w_a, const FloatTensor& w_b,
                                         const SmoothingVector& s) {
  s.validate();
  require(w_a.shape() == w_b.shape(), "fold: parallel weights must share a shape");
  ParallelFold out{w_a, w_b};
  scale_cols(out.w_a, s.s, false);
  scale_cols(out.w_b, s.s, true);
  return out;
}

SwigluFold fold_swiglu_nonlinear(const FloatTensor& w, const FloatTensor& v,
                                 const FloatTensor& b, const FloatTensor& c,
                                 const SmoothingVector& s) {
  s.validate();
  require(w.shape() == v.shape(), "fold: gate and up weights must share a shape");
  SwigluFold out{w, v, b, c, s.s};
  scale_cols(out.w, s.s, false);
  scale_vec(out.b, s.s, false);
  scale_cols(out.v, s.s, true);
  scale_vec(out.c, s.s, true);
  return out;
}

SmoothingSet identity_smoothing(const BlockDims& dims) {
  const std::vector<float> d(dims.d_model, 1.0f), f(dims.d_ffn, 1.0f);
  return {
      {"norm1_qkv", Paradigm::SerialLinearNorm, d},
      {"qk", Paradigm::ParallelLinearLinear, d},
      {"vo", Paradigm::SerialLinearLinear, d},
      {"norm2_gateup", Paradigm::SerialLinearNorm, d},
      {"swiglu", Paradigm::NonLinearActSmooth, f},
      {"updown", Paradigm::SerialLinearLinear, f},
  };
}

BlockWeights apply_smoothing(const BlockWeights& w, const SmoothingSet& set) {
  BlockWeights out = w;
  const FloatTensor none;
  for (const auto& sv : set) {
    sv.validate();
    if (sv.site == "norm1_qkv") {
      NormFold f = fold_serial_linear_norm(out.norm1, {out.wq, out.wk, out.wv}, sv);
      out.norm1 = std::move(f.norm);
      out.wq = std::move(f.next[0]);
      out.wk = std::move(f.next[1]);
      out.wv = std::move(f.next[2]);
    } else if (sv.site == "qk") {
      ParallelFold f = fold_parallel_linear_linear(out.wq, out.wk, sv);
      out.wq = std::move(f.w_a);
      out.wk = std::move(f.w_b);
    } else if (sv.site == "vo") {
      LinearLinearFold f = fold_serial_linear_linear(out.wv, none, out.wo, sv);
      out.wv = std::move(f.w1);
      out.wo = std::move(f.w2);
    } else if (sv.site == "norm2_gateup") {
      NormFold f = fold_serial_linear_norm(out.norm2, {out.w_gate, out.w_up}, sv);
      out.norm2 = std::move(f.norm);
      out.w_gate = std::move(f.next[0]);
      out.w_up = std::move(f.next[1]);
    } else if (sv.site == "swiglu") {
      SwigluFold f = fold_swiglu_nonlinear(out.w_gate, out.w_up, none, none, sv);
      out.w_gate = std::move(f.w);
      out.w_up = std::move(f.v);
      require(out.swiglu_divisor.size() == f.sigma_divisor.size(),
              "fold: swiglu smoothing length must equal d_ffn");
      for (std::size_t i = 0; i < f.sigma_divisor.size(); ++i)
        out.swiglu_divisor[i] *= f.sigma_divisor[i];
    } else if (sv.site == "updown") {
      LinearLinearFold f = fold_serial_linear_linear(out.w_up, none, out.w_down, sv);
      out.w_up = std::move(f.w1);
      out.w_down = std::move(f.w2);
    } else {
      throw ValidationError("unknown smoothing site '" + sv.site + "'");
    }
  }
  return out;
}

namespace {

std::vector<float> col_absmax(const FloatTensor& t) {
  std::vector<float> m(t.cols(), 0.0f);
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[c] = std::max(m[c], std::fabs(t.at(r, c)));
  return m;
}

std::vector<float> row_absmax(const FloatTensor& t) {
  std::vector<float> m(t.rows(), 0.0f);
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (float v : t.row(r)) m[r] = std::max(m[r], std::fabs(v));
  return m;
}

void merge_max(std::vector<float>& acc, const std::vector<float>& v) {
  if (acc.empty()) acc.assign(v.size(), 0.0f);
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] = std::max(acc[i], v[i]);
}

std::vector<float> equalize(const std::vector<float>& num, const std::vector<float>& den,
                            float alpha, float lo, float hi) {
  std::vector<float> s(num.size(), 1.0f);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (num[i] > 0.0f && den[i] > 0.0f) {
      s[i] = std::clamp(
          static_cast<float>(std::pow(static_cast<double>(num[i]) / den[i], alpha)), lo, hi);
    }
  }
  return s;
}

}  // namespace

SmoothingSet absmax_smoothing(const BlockWeights& w, const std::vector<FloatTensor>& calib,
                              float alpha, float s_min, float s_max) {
  IQK_TRACE_FLOAT("absmax_smoothing", calib.size());
  require(!calib.empty(), "absmax smoothing: empty calibration set");
  std::map<std::string, std::vector<float>> act;
  for (const auto& x : calib) {
    FloatProbe probe;
    float_forward(w, x, &probe);
    for (const char* n : {"norm1", "q", "k", "v", "norm2", "gate", "up", "swiglu"})
      merge_max(act[n], col_absmax(probe.at(n)));
  }
  std::vector<float> w_qkv;
  merge_max(w_qkv, row_absmax(w.wq));
  merge_max(w_qkv, row_absmax(w.wk));
  merge_max(w_qkv, row_absmax(w.wv));
  std::vector<float> w_gu;
  merge_max(w_gu, row_absmax(w.w_gate));
  merge_max(w_gu, row_absmax(w.w_up));

  SmoothingSet set = identity_smoothing(w.dims);
  for (auto& sv : set) {
    if (sv.site == "norm1_qkv") sv.s = equalize(act["norm1"], w_qkv, alpha, s_min, s_max);
    if (sv.site == "qk") sv.s = equalize(act["k"], act["q"], alpha, s_min, s_max);
    if (sv.site == "vo") sv.s = equalize(act["v"], row_absmax(w.wo), alpha, s_min, s_max);
    if (sv.site == "norm2_gateup") sv.s = equalize(act["norm2"], w_gu, alpha, s_min, s_max);
    if (sv.site == "swiglu") sv.s = equalize(act["up"], act["gate"], alpha, s_min, s_max);
    if (sv.site == "updown") sv.s = equalize(act["swiglu"], row_absmax(w.w_down), alpha, s_min, s_max);
  }
  return set;
}

void ReconstructionConfig::validate() const {
  require(samples >= 1, "reconstruction: samples must be >= 1");
  require(learning_rate > 0.0, "reconstruction: learning rate must be > 0");
  require(epsilon_fd > 0.0, "reconstruction: finite-difference step must be > 0");
  require(batch >= 1, "reconstruction: batch must be >= 1");
  require(s_min > 0.0 && s_min <= 1.0 && s_max >= 1.0, "reconstruction: need s_min <= 1 <= s_max");
}

namespace {

double loss_on(const BlockWeights& reference, const SmoothingSet& set,
               const std::vector<FloatTensor>& calib, const std::vector<FloatTensor>& targets,
               const std::vector<std::size_t>& idx, const QConfig& q, bool quantize_softmax) {
  IQK_TRACE_FLOAT("reconstruction loss", idx.size());
  const BlockWeights wq = fake_quantize_weights(apply_smoothing(reference, set), q.wbits);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i : idx) {
    const FloatTensor y = sim_forward_prequantized(wq, calib[i], q, quantize_softmax);
    const auto want = targets[i].data();
    const auto got = y.data();
    for (std::size_t e = 0; e < got.size(); ++e) {
      const double d = static_cast<double>(got[e]) - want[e];
      sum += d * d;
    }
    count += got.size();
  }
  const double loss = sum / static_cast<double>(count);
  if (!std::isfinite(loss)) throw NumericalError("reconstruction loss is not finite");
  return loss;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Flattened log-scale parameters of a set.
std::vector<double> to_log(const SmoothingSet& set) {
  std::vector<double> th;
  for (const auto& sv : set)
    for (float v : sv.s) th.push_back(std::log(static_cast<double>(v)));
  return th;
}

SmoothingSet from_log(const SmoothingSet& shape, const std::vector<double>& th) {
  SmoothingSet set = shape;
  std::size_t k = 0;
  for (auto& sv : set)
    for (float& v : sv.s) v = static_cast<float>(std::exp(th[k++]));
  return set;
}

}  // namespace

double reconstruction_loss(const BlockWeights& reference, const SmoothingSet& set,
                           const std::vector<FloatTensor>& calib,
                           const std::vector<FloatTensor>& targets, const QConfig& q) {
  require(calib.size() == targets.size() && !calib.empty(),
          "reconstruction loss: calibration and targets must match and be non-empty");
  return loss_on(reference, set, calib, targets, iota_n(calib.size()), q, false);
}

ReconstructionResult fsbr_reconstruct(const BlockWeights& block,
                                      const std::vector<FloatTensor>& calib_all,
                                      const QConfig& q, const ReconstructionConfig& cfg) {
  cfg.validate();
  q.validate();
  block.validate();
  require(!calib_all.empty(), "fsbr: empty calibration set");
  IQK_TRACE_FLOAT("fsbr_reconstruct", cfg.steps);
  const std::vector<FloatTensor> calib(
      calib_all.begin(), calib_all.begin() + std::min(cfg.samples, calib_all.size()));
  std::vector<FloatTensor> targets;
  targets.reserve(calib.size());
  for (const auto& x : calib) targets.push_back(float_forward(block, x));
  const bool qsoft = !cfg.softmax_unquantized;
  const std::vector<std::size_t> all = iota_n(calib.size());

  const SmoothingSet identity = identity_smoothing(block.dims);
  ReconstructionResult res;
  res.initial_loss = loss_on(block, identity, calib, targets, all, q, qsoft);

  SmoothingSet start = identity;
  if (cfg.warm_start) {
    // Per-site exponent by coordinate search on a calibration subset.
    const std::vector<std::size_t> sub = iota_n(std::min<std::size_t>(calib.size(), 32));
    const std::vector<float> alphas = {0.0f, 0.25f, 0.5f, 0.75f, 1.0f};
    std::vector<SmoothingSet> cand;
    for (float a : alphas) {
      cand.push_back(absmax_smoothing(block, calib, a, static_cast<float>(cfg.s_min),
                                      static_cast<float>(cfg.s_max)));
    }
    res.warm_alpha.assign(start.size(), 0.0f);
    double cur = loss_on(block, start, calib, targets, sub, q, qsoft);
    for (std::size_t site = 0; site < start.size(); ++site) {
      for (std::size_t ai = 1; ai < alphas.size(); ++ai) {
        SmoothingSet trial = start;
        trial[site] = cand[ai][site];
        const double l = loss_on(block, trial, calib, targets, sub, q, qsoft);
        if (l < cur) {
          cur = l;
          start = std::move(trial);
          res.warm_alpha[site] = alphas[ai];
        }
      }
    }
  }
  std::vector<double> th = to_log(start);
  const std::size_t P = th.size();
  const double lo = std::log(cfg.s_min), hi = std::log(cfg.s_max);

  // Adam on log s with simultaneous-perturbation central differences: one
  // random +-1 direction per step, two loss evaluations on a minibatch.
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> m(P, 0.0), v(P, 0.0), delta(P), tp(P), tm(P);
  constexpr double b1 = 0.9, b2 = 0.999, eps_adam = 1e-8;
  double ema = -1.0;
  const std::size_t B = std::min(cfg.batch, calib.size());
  std::vector<std::size_t> batch(B);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (std::size_t b = 0; b < B; ++b) {
      batch[b] = B == calib.size() ? b
                                   : static_cast<std::size_t>(rng.uniform_int(
                                         0, static_cast<std::int64_t>(calib.size()) - 1));
    }
    for (std::size_t i = 0; i < P; ++i) {
      delta[i] = rng.sign();
      tp[i] = std::clamp(th[i] + cfg.epsilon_fd * delta[i], lo, hi);
      tm[i] = std::clamp(th[i] - cfg.epsilon_fd * delta[i], lo, hi);
    }
    const double lp = loss_on(block, from_log(start, tp), calib, targets, batch, q, qsoft);
    const double lm = loss_on(block, from_log(start, tm), calib, targets, batch, q, qsoft);
    const double scale = (lp - lm) / (2.0 * cfg.epsilon_fd);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t i = 0; i < P; ++i) {
      const double g = scale * delta[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      th[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_adam);
      th[i] = std::clamp(th[i], lo, hi);
    }
    res.steps_run = step;
    const double cur = 0.5 * (lp + lm);
    if (ema < 0.0) {
      ema = cur;
    } else {
      const double next = 0.9 * ema + 0.1 * cur;
      const bool flat = std::fabs(next - ema) <= cfg.early_stop * std::max(ema, 1e-30);
      ema = next;
      if (flat && step >= 20) break;
    }
  }

  // Monotone acceptance: keep the learned set only where it helps.
  SmoothingSet best = from_log(start, th);
  res.learned_loss = loss_on(block, best, calib, targets, all, q, qsoft);
  double best_loss = res.learned_loss;
  for (std::size_t s = 0; s < best.size(); ++s) {
    SmoothingSet trial = best;
    trial[s] = identity[s];
    const double l = loss_on(block, trial, calib, targets, all, q, qsoft);
    if (l < best_loss) {
      best = std::move(trial);
      best_loss = l;
      res.reset_sites.push_back(identity[s].site);
    }
  }
  if (best_loss <= res.initial_loss) {
    res.smoothing = std::move(best);
    res.final_loss = best_loss;
  } else {
    res.smoothing = identity;
    res.final_loss = res.initial_loss;
    res.reset_sites.clear();
    for (const auto& sv : identity) res.reset_sites.push_back(sv.site);
  }
  return res;
}

}  // namespace iqk
