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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "iqkernel/block.hpp"
#include "iqkernel/calibrated.hpp"
#include "iqkernel/commands.hpp"
#include "iqkernel/di_matmul.hpp"
#include "iqkernel/di_nonlinear.hpp"
#include "iqkernel/error.hpp"
#include "iqkernel/integer_math.hpp"
#include "iqkernel/manifest.hpp"
#include "iqkernel/quant.hpp"
#include "iqkernel/toy.hpp"

namespace py = pybind11;
using namespace iqk;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

FloatTensor to_tensor(const F32Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return FloatTensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_numpy(const FloatTensor& t) {
  py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<FloatTensor> to_tensors(const std::vector<F32Array>& xs) {
  std::vector<FloatTensor> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(to_tensor(x));
  return out;
}

}  // namespace

PYBIND11_MODULE(_iqkernel, m) {
  m.doc() = "Integer-only transformer block kernels";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("i_sqrt", &i_sqrt, py::arg("n"));
  m.def("floor_log2", &floor_log2, py::arg("n"));
  m.def("int_div", &int_div, py::arg("a"), py::arg("b"), py::arg("p"));
  m.def(
      "fit_dyadic",
      [](std::uint64_t num, std::uint64_t den) {
        const DyadicScale d = fit_dyadic(num, den);
        return py::make_tuple(d.m, d.k);
      },
      py::arg("numerator"), py::arg("denominator"), "Best (m, k) with m / 2^k ~ numerator / denominator.");
  m.def(
      "di_exp",
      [](const std::vector<std::int64_t>& x, std::uint32_t mantissa, std::uint32_t shift) {
        const DyExpOutput out = di_exp(x, DyadicScale{mantissa, shift});
        return py::make_tuple(out.values, out.unit);
      },
      py::arg("x"), py::arg("m"), py::arg("k"),
      "Shift-only exponential of non-positive integers at scale m / 2^k; returns (values, unit).");

  py::class_<QuantTensor>(m, "QuantTensor")
      .def_property_readonly("shape", [](const QuantTensor& q) { return q.shape(); })
      .def_property_readonly("bits", &QuantTensor::bits)
      .def_property_readonly("granularity",
                             [](const QuantTensor& q) { return granularity_name(q.granularity()); })
      .def_property_readonly("data",
                             [](const QuantTensor& q) {
                               py::array_t<std::uint8_t> out(
                                   std::vector<py::ssize_t>(q.shape().begin(), q.shape().end()));
                               std::copy(q.data().begin(), q.data().end(), out.mutable_data());
                               return out;
                             })
      .def_property_readonly("scales",
                             [](const QuantTensor& q) {
                               std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
                               for (const auto& s : q.scales()) out.emplace_back(s.m, s.k);
                               return out;
                             })
      .def_property_readonly("zero_points", &QuantTensor::zero_points)
      .def("dequantize", [](const QuantTensor& q) { return to_numpy(dequantize(q)); });

  m.def(
      "quantize",
      [](const F32Array& x, int bits, const std::string& granularity) {
        return quantize(to_tensor(x), bits, parse_granularity(granularity));
      },
      py::arg("x"), py::arg("bits") = 8, py::arg("granularity") = "per-tensor");

  m.def(
      "softmax",
      [](py::array_t<std::int64_t, py::array::c_style | py::array::forcecast> logits, std::uint64_t mantissa,
         std::uint32_t shift, int c, bool causal, int out_bits) {
        if (logits.ndim() != 2) throw ValidationError("softmax: logits must be 2-D");
        IntAccumulator acc;
        acc.rows = static_cast<std::size_t>(logits.shape(0));
        acc.cols = static_cast<std::size_t>(logits.shape(1));
        acc.data.assign(logits.data(), logits.data() + logits.size());
        acc.mantissa.assign(acc.rows, mantissa);
        acc.shift.assign(acc.rows, shift);
        ClipConfig clip = ClipConfig::from_int(c > 0 ? c : 15);
        clip.enabled = c > 0;
        return to_numpy(dequantize(di_clipped_softmax(acc, clip, out_bits, causal)));
      },
      py::arg("logits"), py::arg("m"), py::arg("k"), py::arg("c") = 15, py::arg("causal") = false,
      py::arg("out_bits") = 8,
      "DI-ClippedSoftmax of integer logits at scale m / 2^k (c <= 0 disables clipping).");

  py::class_<BlockWeights>(m, "Block")
      .def_property_readonly("d_model", [](const BlockWeights& w) { return w.dims.d_model; })
      .def_property_readonly("n_heads", [](const BlockWeights& w) { return w.dims.n_heads; })
      .def_property_readonly("d_ffn", [](const BlockWeights& w) { return w.dims.d_ffn; });

  m.def(
      "make_toy_block",
      [](std::uint64_t seed, std::size_t d_model, std::size_t n_heads, std::size_t d_ffn) {
        return make_toy_block(BlockDims{d_model, n_heads, d_ffn}, seed);
      },
      py::arg("seed") = 0, py::arg("d_model") = 64, py::arg("n_heads") = 4, py::arg("d_ffn") = 172);

  m.def(
      "make_toy_data",
      [](std::uint64_t seed, std::size_t sequences, std::size_t tokens, std::size_t d_model,
         const std::vector<std::pair<std::size_t, float>>& channel_outliers, std::uint64_t stream) {
        ToySpec spec;
        spec.seed = seed;
        spec.sequences = sequences;
        spec.tokens = tokens;
        spec.dims.d_model = d_model;
        spec.dims.n_heads = 1;
        for (const auto& [i, mult] : channel_outliers) spec.channel_outliers.push_back({i, mult});
        std::vector<py::array_t<float>> out;
        for (const auto& x : make_toy_data(spec, stream)) out.push_back(to_numpy(x));
        return out;
      },
      py::arg("seed") = 0, py::arg("sequences") = 16, py::arg("tokens") = 16, py::arg("d_model") = 64,
      py::arg("channel_outliers") = std::vector<std::pair<std::size_t, float>>{}, py::arg("stream") = 0);

  m.def(
      "float_forward", [](const BlockWeights& w, const F32Array& x) { return to_numpy(float_forward(w, to_tensor(x))); },
      py::arg("block"), py::arg("x"));

  py::class_<CalibratedBlock>(m, "CalibratedBlock")
      .def_property_readonly("qconfig", [](const CalibratedBlock& c) { return c.qconfig.name(); })
      .def_property_readonly("clip_c", [](const CalibratedBlock& c) { return c.clip.value(); })
      .def_readonly("initial_loss", &CalibratedBlock::initial_loss)
      .def_readonly("final_loss", &CalibratedBlock::final_loss)
      .def_readonly("steps_run", &CalibratedBlock::steps_run)
      .def_readonly("reference", &CalibratedBlock::reference);

  m.def(
      "calibrate",
      [](const BlockWeights& w, const std::vector<F32Array>& calib, int wbits, int abits,
         const std::string& granularity, int clip_c, std::size_t steps, std::size_t samples,
         double lr, bool warm_start, bool fsbr, std::uint64_t seed) {
        ReconstructionConfig rc;
        rc.steps = steps;
        rc.samples = samples;
        rc.learning_rate = lr;
        rc.warm_start = warm_start;
        rc.seed = seed;
        const QConfig q{wbits, abits, parse_granularity(granularity)};
        const auto xs = to_tensors(calib);
        py::gil_scoped_release release;
        return calibrate(w, xs, q, rc, ClipConfig::from_int(clip_c), fsbr);
      },
      py::arg("block"), py::arg("calib"), py::arg("wbits") = 8, py::arg("abits") = 8,
      py::arg("granularity") = "per-token", py::arg("clip_c") = 15, py::arg("steps") = 200,
      py::arg("samples") = 128, py::arg("lr") = 5e-3, py::arg("warm_start") = false,
      py::arg("fsbr") = true, py::arg("seed") = 0);

  m.def(
      "int_forward",
      [](const CalibratedBlock& cb, const F32Array& x, bool clip, bool per_channel_norm_input) {
        IntForwardOptions opt;
        opt.clip = clip;
        opt.per_channel_norm_input = per_channel_norm_input;
        return to_numpy(int_forward(cb, to_tensor(x), opt));
      },
      py::arg("calibrated"), py::arg("x"), py::arg("clip") = true, py::arg("per_channel_norm_input") = true);

  m.def(
      "_compare_report",
      [](const CalibratedBlock& cb, const std::vector<F32Array>& eval, const std::vector<std::string>& ablate,
         const std::vector<int>& sweep_c, bool trace_float) {
        CompareOptions opt;
        opt.ablate = ablate;
        opt.sweep_c = sweep_c;
        opt.trace_float = trace_float;
        return compare_report(cb, to_tensors(eval), opt).dump();
      });

  m.def("save_block", [](const std::string& path, const BlockWeights& w, std::uint64_t seed) {
    save_block(path, w, seed);
  });
  m.def("load_block", [](const std::string& path) { return load_block(path); });
  m.def("save_calibrated", [](const std::string& path, const CalibratedBlock& cb) { save_calibrated(path, cb); });
  m.def("load_calibrated", [](const std::string& path) { return load_calibrated(path); });

  m.def(
      "cli_main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "iqkernel");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        return cli_main(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Runs the iqkernel command line with the given arguments; returns the exit code.");
}
