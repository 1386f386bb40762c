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

#include "iqkernel/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "iqkernel/error.hpp"
#include "iqkernel/integer_math.hpp"
#include "iqkernel/manifest.hpp"
#include "iqkernel/rng.hpp"
#include "iqkernel/toy.hpp"
#include "iqkernel/trace.hpp"

namespace iqk {

using json = nlohmann::json;

void ErrorAccumulator::add(std::span<const float> got, std::span<const float> want) {
  require(got.size() == want.size(), "error accumulator: size mismatch");
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double d = static_cast<double>(got[i]) - static_cast<double>(want[i]);
    max_abs = std::max(max_abs, std::abs(d));
    sum_sq += d * d;
    ref_sq += static_cast<double>(want[i]) * static_cast<double>(want[i]);
  }
  count += got.size();
}

ErrorStats ErrorAccumulator::stats() const {
  ErrorStats s;
  s.max_abs = max_abs;
  s.mse = count ? sum_sq / static_cast<double>(count) : 0.0;
  s.rel = ref_sq > 0.0 ? std::sqrt(sum_sq / ref_sq) : std::sqrt(sum_sq);
  return s;
}

namespace {

double finite_or_throw(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericalError("non-finite metric: " + what);
  return v;
}

}  // namespace

json to_json(const ErrorStats& s) {
  return {{"max_abs", finite_or_throw(s.max_abs, "max_abs")},
          {"mse", finite_or_throw(s.mse, "mse")},
          {"rel", finite_or_throw(s.rel, "rel")}};
}

namespace {

struct PassMetrics {
  ErrorAccumulator end_to_end;
  std::map<std::string, ErrorAccumulator> per_op;
  ErrorAccumulator softmax_isolated;
};

// Integer softmax against the float softmax of the very same integer logits.
void add_isolated_softmax(const IntProbe& probe, ErrorAccumulator& acc) {
  const auto it = probe.taps.find("softmax");
  if (it == probe.taps.end()) return;
  require(it->second.size() == probe.logits.size(), "softmax probe / logits mismatch");
  for (std::size_t h = 0; h < probe.logits.size(); ++h) {
    const FloatTensor want = float_softmax(dequantize(probe.logits[h]), /*causal=*/true);
    const FloatTensor got = dequantize(it->second[h]);
    acc.add(got.data(), want.data());
  }
}

PassMetrics run_pass(const CalibratedBlock& cb, const std::vector<FloatTensor>& eval,
                     const IntForwardOptions& base, bool per_op) {
  PassMetrics m;
  for (const auto& x : eval) {
    FloatProbe fp;
    const FloatTensor yf = float_forward(cb.reference, x, per_op ? &fp : nullptr);
    IntProbe ip;
    IntForwardOptions opt = base;
    opt.probe = &ip;
    const FloatTensor yi = int_forward(cb, x, opt);
    m.end_to_end.add(yi.data(), yf.data());
    add_isolated_softmax(ip, m.softmax_isolated);
    if (!per_op) continue;
    FloatProbe got = ip.dequantized();
    got["output"] = yi;
    for (const auto& [name, want] : fp) {
      const auto g = got.find(name);
      if (g == got.end() || g->second.size() != want.size()) continue;
      m.per_op[name].add(g->second.data(), want.data());
    }
  }
  return m;
}

json clip_json(const ClipConfig& c) {
  return {{"c", c.value()}, {"c_m", c.c_m}, {"c_k", c.c_k}, {"enabled", c.enabled}};
}

}  // namespace

json compare_report(const CalibratedBlock& cb, const std::vector<FloatTensor>& eval,
                    const CompareOptions& opt) {
  require(!eval.empty(), "compare: empty eval set");
  for (const auto& a : opt.ablate)
    require(a == "fsbr" || a == "clipped-softmax" || a == "di-norm",
            "unknown ablation '" + a + "' (expected fsbr, clipped-softmax or di-norm)");

  json report;
  report["qconfig"] = {{"name", cb.qconfig.name()},
                       {"wbits", cb.qconfig.wbits},
                       {"abits", cb.qconfig.abits},
                       {"granularity", granularity_name(cb.qconfig.act_granularity)}};
  report["clip"] = clip_json(cb.clip);
  report["seed"] = cb.seed;
  report["eval_sequences"] = eval.size();

  if (opt.trace_float) {
    trace::reset();
    trace::enable(true);
  }
  PassMetrics full;
  try {
    full = run_pass(cb, eval, {}, /*per_op=*/true);
  } catch (...) {
    if (opt.trace_float) trace::enable(false);
    throw;
  }
  if (opt.trace_float) {
    trace::enable(false);
    json ops = json::array();
    for (const auto& v : trace::violations()) ops.push_back({{"op", v.op}, {"count", v.count}});
    report["trace_float"] = {{"compiled_in", trace::compiled_in()},
                             {"violations", trace::violation_count()},
                             {"ops", ops}};
  }

  const ErrorStats e2e = full.end_to_end.stats();
  report["end_to_end"] = to_json(e2e);
  json per_op = json::array();
  for (const auto& name : probe_points()) {
    const auto it = full.per_op.find(name);
    if (it == full.per_op.end()) continue;
    json row = to_json(it->second.stats());
    row["op"] = name;
    per_op.push_back(row);
  }
  report["per_op"] = per_op;
  report["softmax_isolated"] = to_json(full.softmax_isolated.stats());

  if (!opt.ablate.empty()) {
    json abl = json::object();
    for (const auto& a : opt.ablate) {
      PassMetrics m;
      if (a == "fsbr") {
        CalibratedBlock plain =
            build_calibrated(cb.reference, identity_smoothing(cb.reference.dims), cb.qconfig,
                             cb.clip, cb.norm1_range, cb.norm2_range);
        m = run_pass(plain, eval, {}, false);
      } else if (a == "clipped-softmax") {
        IntForwardOptions o;
        o.clip = false;
        m = run_pass(cb, eval, o, false);
      } else {
        IntForwardOptions o;
        o.per_channel_norm_input = false;
        m = run_pass(cb, eval, o, false);
      }
      const ErrorStats s = m.end_to_end.stats();
      json row = {{"end_to_end", to_json(s)},
                  {"softmax_isolated", to_json(m.softmax_isolated.stats())},
                  {"delta_mse", finite_or_throw(s.mse - e2e.mse, "delta_mse")},
                  {"delta_max_abs", finite_or_throw(s.max_abs - e2e.max_abs, "delta_max_abs")}};
      abl[a] = row;
    }
    report["ablations"] = abl;
  }

  if (!opt.sweep_c.empty()) {
    json sweep = json::array();
    for (int c : opt.sweep_c) {
      CalibratedBlock variant = cb;
      variant.clip = ClipConfig::from_int(c);
      const PassMetrics m = run_pass(variant, eval, {}, false);
      const ErrorStats sm = m.softmax_isolated.stats();
      sweep.push_back({{"c", c},
                       {"softmax_max_abs", finite_or_throw(sm.max_abs, "softmax max_abs")},
                       {"softmax_mse", finite_or_throw(sm.mse, "softmax mse")},
                       {"end_to_end", to_json(m.end_to_end.stats())}});
    }
    report["sweep_c"] = sweep;
  }
  return report;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << std::scientific << v;
  return os.str();
}

void stats_row(std::ostringstream& os, const std::string& label, const json& s) {
  os << "| " << label << " | " << fmt(s.at("max_abs").get<double>()) << " | "
     << fmt(s.at("mse").get<double>()) << " | " << fmt(s.at("rel").get<double>()) << " |\n";
}

}  // namespace

std::string report_markdown(const json& r) {
  std::ostringstream os;
  os << "# Integer vs float error report\n\n";
  os << "- config: " << r.at("qconfig").at("name").get<std::string>() << " ("
     << r.at("qconfig").at("granularity").get<std::string>() << ")\n";
  os << "- clip c: " << r.at("clip").at("c").get<double>()
     << (r.at("clip").at("enabled").get<bool>() ? "" : " (disabled)") << "\n";
  os << "- seed: " << r.at("seed").get<std::uint64_t>() << "\n";
  os << "- eval sequences: " << r.at("eval_sequences").get<std::size_t>() << "\n";
  if (r.contains("runtime_s")) os << "- runtime: " << r.at("runtime_s").get<double>() << " s\n";
  if (r.contains("trace_float"))
    os << "- float ops inside the integer region: "
       << r.at("trace_float").at("violations").get<std::uint64_t>() << "\n";

  os << "\n| tensor | max abs | MSE | relative |\n|---|---|---|---|\n";
  stats_row(os, "**end to end**", r.at("end_to_end"));
  for (const auto& row : r.at("per_op")) stats_row(os, row.at("op").get<std::string>(), row);
  stats_row(os, "softmax (same logits)", r.at("softmax_isolated"));

  if (r.contains("ablations")) {
    os << "\n| ablation | max abs | MSE | relative | delta MSE |\n|---|---|---|---|---|\n";
    for (const auto& [name, row] : r.at("ablations").items()) {
      const auto& s = row.at("end_to_end");
      os << "| " << name << " | " << fmt(s.at("max_abs").get<double>()) << " | "
         << fmt(s.at("mse").get<double>()) << " | " << fmt(s.at("rel").get<double>()) << " | "
         << fmt(row.at("delta_mse").get<double>()) << " |\n";
    }
  }
  if (r.contains("sweep_c")) {
    os << "\n| c | softmax max abs | softmax MSE | end-to-end MSE |\n|---|---|---|---|\n";
    for (const auto& row : r.at("sweep_c")) {
      os << "| " << row.at("c").get<int>() << " | " << fmt(row.at("softmax_max_abs").get<double>())
         << " | " << fmt(row.at("softmax_mse").get<double>()) << " | "
         << fmt(row.at("end_to_end").at("mse").get<double>()) << " |\n";
    }
  }
  return os.str();
}

// ---- selftest ---------------------------------------------------------------

std::vector<SelftestLine> run_selftest(std::uint64_t seed) {
  std::vector<SelftestLine> out;
  Rng rng(seed);

  {
    std::uint64_t bad = 0;
    for (std::uint64_t n = 0; n <= (1u << 16); ++n) {
      const std::uint64_t r = i_sqrt(n);
      if (r * r > n || (r + 1) * (r + 1) <= n) ++bad;
    }
    for (int i = 0; i < 10000; ++i) {
      const std::uint64_t n = rng.next_u64();
      const u128 r = i_sqrt(n);
      if (r * r > n || (r + 1) * (r + 1) <= n) ++bad;
    }
    out.push_back({"i_sqrt", bad == 0, std::to_string(bad) + " mismatches"});
  }
  {
    double worst = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const double t = std::ldexp(1.0 + rng.uniform(), static_cast<int>(rng.uniform_int(-16, 6)));
      const DyadicScale d = fit_dyadic(t);
      worst = std::max(worst, std::abs(d.value() - t) / t);
    }
    out.push_back({"fit_dyadic", worst <= std::ldexp(1.0, -8), "max rel " + fmt(worst)});
  }
  {
    double worst = 0.0;
    const std::size_t rows = 200, cols = 32;
    IntAccumulator acc;
    acc.rows = rows;
    acc.cols = cols;
    for (std::size_t r = 0; r < rows; ++r) {
      acc.mantissa.push_back(static_cast<std::uint64_t>(rng.uniform_int(128, 255)));
      acc.shift.push_back(static_cast<std::uint32_t>(rng.uniform_int(10, 14)));
      for (std::size_t c = 0; c < cols; ++c) acc.data.push_back(rng.uniform_int(-128, 127));
    }
    const QuantTensor p = di_clipped_softmax(acc, ClipConfig{}, 8);
    const FloatTensor got = dequantize(p);
    const FloatTensor want = float_softmax(dequantize(acc), false);
    for (std::size_t i = 0; i < got.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(got[i]) - want[i]));
    out.push_back({"clipped_softmax", worst <= 0.047, "max abs " + fmt(worst)});
  }
  {
    ToySpec spec;
    spec.seed = seed;
    spec.sequences = 2;
    spec.tokens = 8;
    const BlockWeights w = make_toy_block(spec.dims, seed);
    const auto xs = make_toy_data(spec, 1);
    SmoothingSet set = identity_smoothing(w.dims);
    for (auto& sv : set)
      for (auto& v : sv.s) v = static_cast<float>(std::exp(rng.uniform(-2.3, 2.3)));
    const BlockWeights f = apply_smoothing(w, set);
    const FloatTensor a = float_forward(w, xs[0]);
    const FloatTensor b = float_forward(f, xs[0]);
    const ErrorStats e = compare(b.data(), a.data());
    out.push_back({"fold_exactness", e.max_abs <= 1e-5, "max abs " + fmt(e.max_abs)});

    ChannelRange r1, r2;
    measure_norm_ranges(w, xs, r1, r2);
    const CalibratedBlock cb =
        build_calibrated(w, identity_smoothing(w.dims), QConfig{}, ClipConfig{}, r1, r2);
    trace::reset();
    trace::enable(true);
    const FloatTensor yi = int_forward(cb, xs[1]);
    trace::enable(false);
    const std::uint64_t v = trace::violation_count();
    out.push_back({"integer_purity", trace::compiled_in() && v == 0,
                   std::to_string(v) + " float ops in the integer region"});
    const ErrorStats ee = compare(yi.data(), float_forward(w, xs[1]).data());
    out.push_back({"w8a8_forward", ee.rel < 0.1, "relative " + fmt(ee.rel)});
  }
  return out;
}

// ---- CLI --------------------------------------------------------------------

namespace {

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("IQKERNEL_SEED")) {
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(env, &pos, 0);
      if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(std::string("IQKERNEL_SEED is not an integer: '") + env + "'");
  }
  return 0;
}

std::vector<Outlier> parse_outliers(const std::vector<std::string>& specs) {
  std::vector<Outlier> out;
  for (const auto& s : specs) {
    const auto colon = s.find(':');
    require(colon != std::string::npos, "outlier spec must be INDEX:MULTIPLIER, got '" + s + "'");
    Outlier o;
    try {
      o.index = std::stoul(s.substr(0, colon));
      o.multiplier = std::stof(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("bad outlier spec '" + s + "'");
    }
    out.push_back(o);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoi(item, &pos));
      require(pos == item.size(), "bad integer '" + item + "'");
    } catch (const std::logic_error&) {
      throw ValidationError("bad integer list '" + s + "'");
    }
  }
  require(!out.empty(), "empty integer list");
  return out;
}

void check_bits(int b, const char* flag) {
  require(b == 4 || b == 6 || b == 8, std::string(flag) + " must be 4, 6 or 8");
}

double channel_absmax_ratio(const std::vector<FloatTensor>& xs, std::size_t channel) {
  const std::size_t d = xs.at(0).cols();
  std::vector<double> absmax(d, 0.0);
  for (const auto& x : xs)
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < d; ++c)
        absmax[c] = std::max(absmax[c], std::abs(static_cast<double>(x.at(r, c))));
  std::vector<double> sorted = absmax;
  std::nth_element(sorted.begin(), sorted.begin() + d / 2, sorted.end());
  return absmax.at(channel) / sorted[d / 2];
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path);
  f << text;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Integer-only transformer block kernels: toy data, calibration, comparison"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed_flag;

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "Write a toy block plus calibration and eval data");
  std::string out_dir = ".";
  ToySpec spec;
  std::vector<std::string> ch_out, tok_out;
  std::size_t eval_sequences = 32;
  gen->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  gen->add_option("--seed", seed_flag, "Seed (falls back to IQKERNEL_SEED)");
  gen->add_option("--d-model", spec.dims.d_model)->capture_default_str();
  gen->add_option("--heads", spec.dims.n_heads)->capture_default_str();
  gen->add_option("--d-ffn", spec.dims.d_ffn)->capture_default_str();
  gen->add_option("--sequences", spec.sequences, "Calibration sequences")->capture_default_str();
  gen->add_option("--eval-sequences", eval_sequences)->capture_default_str();
  gen->add_option("--tokens", spec.tokens, "Tokens per sequence")->capture_default_str();
  gen->add_option("--channel-outlier", ch_out, "CHANNEL:MULTIPLIER (repeatable)");
  gen->add_option("--token-outlier", tok_out, "TOKEN:MULTIPLIER (repeatable)");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Run FSBR and write a calibrated block");
  std::string model, calib, out_path;
  QConfig q;
  std::string granularity = "per-token";
  int clip_c = 15;
  ReconstructionConfig rcfg;
  bool no_fsbr = false;
  cal->add_option("--model", model, "Block manifest")->required();
  cal->add_option("--calib", calib, "Calibration sequences")->required();
  cal->add_option("--out", out_path, "Calibrated manifest to write")->required();
  cal->add_option("--wbits", q.wbits)->capture_default_str();
  cal->add_option("--abits", q.abits)->capture_default_str();
  cal->add_option("--granularity", granularity, "per-tensor or per-token")->capture_default_str();
  cal->add_option("--clip-c", clip_c, "Softmax clipping range")->capture_default_str();
  cal->add_option("--lr", rcfg.learning_rate)->capture_default_str();
  cal->add_option("--samples", rcfg.samples)->capture_default_str();
  cal->add_option("--steps", rcfg.steps)->capture_default_str();
  cal->add_option("--batch", rcfg.batch)->capture_default_str();
  cal->add_flag("--warm-start", rcfg.warm_start, "Start from the absmax equalizer");
  cal->add_flag("--no-fsbr", no_fsbr, "Skip reconstruction (identity smoothing)");
  cal->add_option("--seed", seed_flag, "Seed (falls back to IQKERNEL_SEED)");

  // run
  auto* run = app.add_subcommand("run", "Integer forward pass over a sequence file");
  std::string input;
  run->add_option("--model", model, "Calibrated manifest")->required();
  run->add_option("--input", input, "Input sequences")->required();
  run->add_option("--out", out_path, "Output sequences to write");

  // compare
  auto* cmp = app.add_subcommand("compare", "Integer vs float error report");
  CompareOptions copt;
  std::string sweep;
  bool markdown = false, timing = false;
  std::string report_out;
  cmp->add_option("--model", model, "Calibrated manifest")->required();
  cmp->add_option("--eval", input, "Eval sequences")->required();
  cmp->add_option("--ablate", copt.ablate, "fsbr | clipped-softmax | di-norm (repeatable)");
  cmp->add_option("--sweep-c", sweep, "Comma-separated clip values, e.g. 5,10,15,20");
  cmp->add_flag("--markdown", markdown, "Render tables instead of JSON");
  cmp->add_flag("--timing", timing, "Add wall-clock runtime to the report");
  cmp->add_flag("--trace-float", copt.trace_float, "Count float ops inside the integer region");
  cmp->add_option("--out", report_out, "Write the report here instead of stdout");

  // selftest
  auto* st = app.add_subcommand("selftest", "Quick built-in checks");
  st->add_option("--seed", seed_flag, "Seed (falls back to IQKERNEL_SEED)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) {
      spec.seed = resolve_seed(seed_flag);
      spec.channel_outliers = parse_outliers(ch_out);
      spec.token_outliers = parse_outliers(tok_out);
      spec.validate();
      require(eval_sequences > 0, "--eval-sequences must be positive");
      const std::filesystem::path dir(out_dir);
      std::filesystem::create_directories(dir);
      const BlockWeights w = make_toy_block(spec.dims, spec.seed);
      const auto calib_xs = make_toy_data(spec, 0);
      ToySpec eval_spec = spec;
      eval_spec.sequences = eval_sequences;
      const auto eval_xs = make_toy_data(eval_spec, 1);
      json outliers = json::object();
      outliers["channel"] = json::array();
      outliers["token"] = json::array();
      for (const auto& o : spec.channel_outliers)
        outliers["channel"].push_back({{"index", o.index}, {"multiplier", o.multiplier}});
      for (const auto& o : spec.token_outliers)
        outliers["token"].push_back({{"index", o.index}, {"multiplier", o.multiplier}});
      const json meta = {{"seed", spec.seed}, {"prng", Rng::kName}, {"outliers", outliers}};
      save_block(dir / "block.json", w, spec.seed);
      json cmeta = meta;
      cmeta["stream"] = "calib";
      save_sequences(dir / "calib.json", calib_xs, cmeta);
      json emeta = meta;
      emeta["stream"] = "eval";
      save_sequences(dir / "eval.json", eval_xs, emeta);
      json summary = {{"block", (dir / "block.json").string()},
                      {"calib", (dir / "calib.json").string()},
                      {"eval", (dir / "eval.json").string()},
                      {"seed", spec.seed}};
      json ratios = json::array();
      for (const auto& o : spec.channel_outliers)
        ratios.push_back({{"channel", o.index},
                          {"absmax_over_median", channel_absmax_ratio(calib_xs, o.index)}});
      summary["calib_outlier_ratio"] = ratios;
      std::cout << summary.dump(2) << "\n";
      return 0;
    }

    if (*cal) {
      check_bits(q.wbits, "--wbits");
      check_bits(q.abits, "--abits");
      q.act_granularity = parse_granularity(granularity);
      require(q.act_granularity != Granularity::PerChannel,
              "--granularity must be per-tensor or per-token");
      rcfg.seed = resolve_seed(seed_flag);
      rcfg.validate();
      const BlockWeights w = load_block(model);
      const auto xs = load_sequences(calib);
      const CalibratedBlock cb =
          calibrate(w, xs, q, rcfg, ClipConfig::from_int(clip_c), !no_fsbr);
      save_calibrated(out_path, cb);
      const bool improved = cb.final_loss < cb.initial_loss;
      if (!no_fsbr && !improved)
        std::cerr << "warning: reconstruction did not improve on identity smoothing; "
                     "wrote the identity-smoothed block\n";
      std::cout << json{{"out", out_path},
                        {"qconfig", q.name()},
                        {"clip_c", cb.clip.value()},
                        {"initial_loss", cb.initial_loss},
                        {"final_loss", cb.final_loss},
                        {"steps_run", cb.steps_run},
                        {"improved", improved},
                        {"seed", cb.seed}}
                       .dump(2)
                << "\n";
      return 0;
    }

    if (*run) {
      const CalibratedBlock cb = load_calibrated(model);
      const auto xs = load_sequences(input);
      std::vector<FloatTensor> ys;
      ys.reserve(xs.size());
      for (const auto& x : xs) ys.push_back(int_forward(cb, x));
      if (!out_path.empty())
        save_sequences(out_path, ys, {{"source", input}, {"qconfig", cb.qconfig.name()}});
      std::cout << json{{"qconfig", cb.qconfig.name()},
                        {"granularity", granularity_name(cb.qconfig.act_granularity)},
                        {"clip_c", cb.clip.value()},
                        {"sequences", ys.size()},
                        {"out", out_path}}
                       .dump(2)
                << "\n";
      return 0;
    }

    if (*cmp) {
      if (!sweep.empty()) copt.sweep_c = parse_int_list(sweep);
      const auto t0 = std::chrono::steady_clock::now();
      const CalibratedBlock cb = load_calibrated(model);
      const auto xs = load_sequences(input);
      json report = compare_report(cb, xs, copt);
      if (timing)
        report["runtime_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_text(report_out, markdown ? report_markdown(report) : report.dump(2) + "\n");
      return 0;
    }

    if (*st) {
      bool all = true;
      for (const auto& line : run_selftest(resolve_seed(seed_flag))) {
        std::cout << (line.pass ? "PASS " : "FAIL ") << line.name << ": " << line.detail << "\n";
        all = all && line.pass;
      }
      return all ? 0 : 1;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed manifest: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace iqk
