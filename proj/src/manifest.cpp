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

#include "iqkernel/manifest.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "iqkernel/error.hpp"
#include "iqkernel/rng.hpp"

namespace iqk {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need byte swapping");

constexpr int kFormatVersion = 1;

template <class T>
void append_raw(std::vector<std::uint8_t>& blob, const T* p, std::size_t n) {
  const auto* b = reinterpret_cast<const std::uint8_t*>(p);
  blob.insert(blob.end(), b, b + n * sizeof(T));
}

template <class T>
std::vector<T> read_raw(std::span<const std::uint8_t> bytes) {
  require(bytes.size() % sizeof(T) == 0, "tensor file: payload size mismatch");
  std::vector<T> out(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::filesystem::path sidecar(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".bin");
}

json scales_json(const QuantParams& p) {
  json s = json::array();
  for (const auto& d : p.scale) s.push_back({d.m, d.k});
  return s;
}

QuantParams params_from_json(const json& scales, const json& zps) {
  QuantParams p;
  require(scales.is_array() && zps.is_array() && scales.size() == zps.size(),
          "tensor file: scale and zero_point lists must match");
  for (const auto& s : scales) {
    require(s.is_array() && s.size() == 2, "tensor file: scale entries are [m, k]");
    const auto m = s[0].get<std::int64_t>(), k = s[1].get<std::int64_t>();
    require(m >= 0 && m <= 255 && k >= 0 && k <= 255, "tensor file: scale out of range");
    p.scale.push_back({static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(k)});
  }
  for (const auto& z : zps) p.zero_point.push_back(z.get<std::int32_t>());
  return p;
}

}  // namespace

json TensorFileWriter::entry(const std::string& name, const char* dtype, const Shape& shape,
                             std::size_t nbytes) {
  for (const auto& t : tensors_) {
    require(t["name"] != name, "tensor file: duplicate tensor '" + name + "'");
  }
  return {{"name", name}, {"dtype", dtype}, {"shape", shape},
          {"offset", blob_.size()}, {"nbytes", nbytes}};
}

void TensorFileWriter::add(const std::string& name, const FloatTensor& t) {
  json e = entry(name, "f32", t.shape(), t.size() * 4);
  append_raw(blob_, t.data().data(), t.size());
  tensors_.push_back(std::move(e));
}

void TensorFileWriter::add(const std::string& name, const QuantTensor& q) {
  json e = entry(name, "u8", q.shape(), q.size());
  e["bits"] = q.bits();
  e["axis"] = granularity_name(q.granularity());
  e["scale"] = scales_json(q.params());
  e["zero_point"] = q.zero_points();
  append_raw(blob_, q.data().data(), q.size());
  tensors_.push_back(std::move(e));
}

void TensorFileWriter::add_i32(const std::string& name, const Shape& shape,
                               const std::vector<std::int32_t>& v) {
  require(shape_numel(shape) == v.size(), "tensor file: i32 shape mismatch");
  json e = entry(name, "i32", shape, v.size() * 4);
  append_raw(blob_, v.data(), v.size());
  tensors_.push_back(std::move(e));
}

void TensorFileWriter::add_u16(const std::string& name, const Shape& shape,
                               const std::vector<std::uint16_t>& v) {
  require(shape_numel(shape) == v.size(), "tensor file: u16 shape mismatch");
  json e = entry(name, "u16", shape, v.size() * 2);
  append_raw(blob_, v.data(), v.size());
  tensors_.push_back(std::move(e));
}

void TensorFileWriter::write(const std::filesystem::path& path) const {
  json doc = {{"format", "iqkernel-tensors"},
              {"version", kFormatVersion},
              {"payload", sidecar(path).filename().string()},
              {"meta", meta_},
              {"tensors", tensors_}};
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write " + path.string());
    os << doc.dump(2) << '\n';
    if (!os) throw ValidationError("write failed: " + path.string());
  }
  std::ofstream bs(sidecar(path), std::ios::binary);
  if (!bs) throw ValidationError("cannot write " + sidecar(path).string());
  bs.write(reinterpret_cast<const char*>(blob_.data()),
           static_cast<std::streamsize>(blob_.size()));
  if (!bs) throw ValidationError("write failed: " + sidecar(path).string());
}

TensorFileReader::TensorFileReader(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
  }
  require(doc.value("format", "") == "iqkernel-tensors",
          "not an iqkernel tensor manifest: " + path.string());
  require(doc.value("version", 0) == kFormatVersion, "unsupported manifest version");
  meta_ = doc.value("meta", json::object());
  const auto bin = path.parent_path() / doc.at("payload").get<std::string>();
  std::ifstream bs(bin, std::ios::binary);
  if (!bs) throw ValidationError("cannot open payload " + bin.string());
  blob_.assign(std::istreambuf_iterator<char>(bs), std::istreambuf_iterator<char>());
  for (const auto& t : doc.at("tensors")) {
    const std::string name = t.at("name");
    require(!index_.count(name), "duplicate tensor '" + name + "' in " + path.string());
    const auto off = t.at("offset").get<std::size_t>(), nb = t.at("nbytes").get<std::size_t>();
    require(off + nb <= blob_.size() && off + nb >= off,
            "tensor '" + name + "' extends past the payload");
    index_[name] = t;
  }
}

std::vector<std::string> TensorFileReader::names() const {
  std::vector<std::string> out;
  for (const auto& [n, e] : index_) out.push_back(n);
  return out;
}

const json& TensorFileReader::entry(const std::string& name, const char* dtype) const {
  const auto it = index_.find(name);
  require(it != index_.end(), "tensor '" + name + "' not found");
  require(it->second.at("dtype") == dtype, "tensor '" + name + "' is not " + dtype);
  return it->second;
}

std::span<const std::uint8_t> TensorFileReader::bytes(const json& e) const {
  return std::span<const std::uint8_t>(blob_).subspan(e.at("offset").get<std::size_t>(),
                                                      e.at("nbytes").get<std::size_t>());
}

Shape TensorFileReader::shape(const std::string& name) const {
  const auto it = index_.find(name);
  require(it != index_.end(), "tensor '" + name + "' not found");
  return it->second.at("shape").get<Shape>();
}

FloatTensor TensorFileReader::float_tensor(const std::string& name) const {
  const json& e = entry(name, "f32");
  return FloatTensor(e.at("shape").get<Shape>(), read_raw<float>(bytes(e)));
}

QuantTensor TensorFileReader::quant_tensor(const std::string& name) const {
  const json& e = entry(name, "u8");
  return QuantTensor(e.at("shape").get<Shape>(), read_raw<std::uint8_t>(bytes(e)),
                     e.at("bits").get<int>(), parse_granularity(e.at("axis")),
                     params_from_json(e.at("scale"), e.at("zero_point")));
}

std::vector<std::int32_t> TensorFileReader::i32(const std::string& name) const {
  return read_raw<std::int32_t>(bytes(entry(name, "i32")));
}

std::vector<std::uint16_t> TensorFileReader::u16(const std::string& name) const {
  return read_raw<std::uint16_t>(bytes(entry(name, "u16")));
}

// ---- Block artifacts --------------------------------------------------------

namespace {

json dims_json(const BlockDims& d) {
  return {{"d_model", d.d_model}, {"n_heads", d.n_heads}, {"d_ffn", d.d_ffn}};
}

BlockDims dims_from(const json& j) {
  BlockDims d;
  d.d_model = j.at("d_model");
  d.n_heads = j.at("n_heads");
  d.d_ffn = j.at("d_ffn");
  d.validate();
  return d;
}

FloatTensor vec_tensor(const std::vector<float>& v) { return FloatTensor({v.size()}, v); }

void add_block(TensorFileWriter& w, const std::string& prefix, const BlockWeights& b) {
  w.add(prefix + "norm1.gamma", vec_tensor(b.norm1.gamma));
  w.add(prefix + "norm2.gamma", vec_tensor(b.norm2.gamma));
  w.add(prefix + "wq", b.wq);
  w.add(prefix + "wk", b.wk);
  w.add(prefix + "wv", b.wv);
  w.add(prefix + "wo", b.wo);
  w.add(prefix + "w_gate", b.w_gate);
  w.add(prefix + "w_up", b.w_up);
  w.add(prefix + "w_down", b.w_down);
  w.add(prefix + "swiglu_divisor", vec_tensor(b.swiglu_divisor));
}

BlockWeights read_block(const TensorFileReader& r, const std::string& prefix,
                        const BlockDims& dims) {
  BlockWeights b;
  b.dims = dims;
  b.norm1.gamma = r.float_tensor(prefix + "norm1.gamma").vec();
  b.norm2.gamma = r.float_tensor(prefix + "norm2.gamma").vec();
  b.wq = r.float_tensor(prefix + "wq");
  b.wk = r.float_tensor(prefix + "wk");
  b.wv = r.float_tensor(prefix + "wv");
  b.wo = r.float_tensor(prefix + "wo");
  b.w_gate = r.float_tensor(prefix + "w_gate");
  b.w_up = r.float_tensor(prefix + "w_up");
  b.w_down = r.float_tensor(prefix + "w_down");
  b.swiglu_divisor = r.float_tensor(prefix + "swiglu_divisor").vec();
  b.validate();
  return b;
}

json qparams_json(const QuantParams& p) {
  return {{"scale", scales_json(p)}, {"zero_point", p.zero_point}};
}

}  // namespace

void save_block(const std::filesystem::path& path, const BlockWeights& w, std::uint64_t seed) {
  w.validate();
  TensorFileWriter out;
  out.meta() = {{"kind", "block"}, {"dims", dims_json(w.dims)}, {"seed", seed},
                {"prng", Rng::kName}};
  add_block(out, "", w);
  out.write(path);
}

BlockWeights load_block(const std::filesystem::path& path) {
  TensorFileReader r(path);
  require(r.meta().value("kind", "") == "block", path.string() + " is not a block manifest");
  return read_block(r, "", dims_from(r.meta().at("dims")));
}

void save_sequences(const std::filesystem::path& path, const std::vector<FloatTensor>& xs,
                    const json& meta) {
  require(!xs.empty(), "no sequences to save");
  const Shape s0 = xs[0].shape();
  std::vector<float> all;
  for (const auto& x : xs) {
    require(x.shape() == s0, "sequences must share a shape");
    all.insert(all.end(), x.data().begin(), x.data().end());
  }
  TensorFileWriter out;
  out.meta() = meta;
  out.meta()["kind"] = "sequences";
  out.add("x", FloatTensor({xs.size(), s0[0], s0[1]}, std::move(all)));
  out.write(path);
}

std::vector<FloatTensor> load_sequences(const std::filesystem::path& path) {
  TensorFileReader r(path);
  require(r.meta().value("kind", "") == "sequences",
          path.string() + " is not a sequence manifest");
  const FloatTensor x = r.float_tensor("x");
  require(x.rank() == 3, "sequence tensor must be [n, tokens, d_model]");
  const std::size_t n = x.dim(0), t = x.dim(1), d = x.dim(2);
  std::vector<FloatTensor> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(Shape{t, d}, std::vector<float>(x.data().begin() + i * t * d,
                                                     x.data().begin() + (i + 1) * t * d));
  }
  return out;
}

void save_calibrated(const std::filesystem::path& path, const CalibratedBlock& cb) {
  TensorFileWriter out;
  json sm = json::array();
  for (const auto& sv : cb.smoothing) {
    sm.push_back({{"site", sv.site}, {"paradigm", paradigm_name(sv.paradigm)}});
    out.add("smooth." + sv.site, vec_tensor(sv.s));
  }
  out.meta() = {
      {"kind", "calibrated"},
      {"dims", dims_json(cb.reference.dims)},
      {"qconfig",
       {{"wbits", cb.qconfig.wbits},
        {"abits", cb.qconfig.abits},
        {"granularity", granularity_name(cb.qconfig.act_granularity)}}},
      {"clip", {{"c_m", cb.clip.c_m}, {"c_k", cb.clip.c_k}, {"enabled", cb.clip.enabled}}},
      {"smoothing", sm},
      {"norm1_input", qparams_json(cb.norm1_input)},
      {"norm2_input", qparams_json(cb.norm2_input)},
      {"norm1", {{"g_shift", cb.norm1.g_shift}}},
      {"norm2", {{"g_shift", cb.norm2.g_shift}}},
      {"reconstruction",
       {{"initial_loss", cb.initial_loss},
        {"final_loss", cb.final_loss},
        {"steps_run", cb.steps_run}}},
      {"seed", cb.seed},
      {"prng", Rng::kName},
  };
  add_block(out, "ref.", cb.reference);
  out.add("norm1_range.lo", vec_tensor(cb.norm1_range.lo));
  out.add("norm1_range.hi", vec_tensor(cb.norm1_range.hi));
  out.add("norm2_range.lo", vec_tensor(cb.norm2_range.lo));
  out.add("norm2_range.hi", vec_tensor(cb.norm2_range.hi));
  out.add("q.wq", cb.wq);
  out.add("q.wk", cb.wk);
  out.add("q.wv", cb.wv);
  out.add("q.wo", cb.wo);
  out.add("q.w_gate", cb.w_gate);
  out.add("q.w_up", cb.w_up);
  out.add("q.w_down", cb.w_down);
  out.add_i32("norm1.g", {cb.norm1.g.size()}, cb.norm1.g);
  out.add_i32("norm2.g", {cb.norm2.g.size()}, cb.norm2.g);
  std::vector<std::int32_t> alpha(cb.swiglu.alpha.begin(), cb.swiglu.alpha.end());
  for (std::uint32_t a : cb.swiglu.alpha) {
    require(a <= 0x7fffffffu, "swiglu divisor exceeds the i32 file range");
  }
  out.add_i32("swiglu.alpha", {alpha.size()}, alpha);
  out.write(path);
}

CalibratedBlock load_calibrated(const std::filesystem::path& path) {
  TensorFileReader r(path);
  const json& m = r.meta();
  require(m.value("kind", "") == "calibrated", path.string() + " is not a calibrated model");
  CalibratedBlock cb;
  const BlockDims dims = dims_from(m.at("dims"));
  cb.reference = read_block(r, "ref.", dims);
  cb.qconfig.wbits = m.at("qconfig").at("wbits");
  cb.qconfig.abits = m.at("qconfig").at("abits");
  cb.qconfig.act_granularity = parse_granularity(m.at("qconfig").at("granularity"));
  cb.qconfig.validate();
  cb.clip.c_m = m.at("clip").at("c_m");
  cb.clip.c_k = m.at("clip").at("c_k");
  cb.clip.enabled = m.at("clip").at("enabled");
  for (const auto& s : m.at("smoothing")) {
    SmoothingVector sv;
    sv.site = s.at("site");
    sv.paradigm = parse_paradigm(s.at("paradigm"));
    sv.s = r.float_tensor("smooth." + sv.site).vec();
    sv.validate();
    cb.smoothing.push_back(std::move(sv));
  }
  cb.norm1_range = {r.float_tensor("norm1_range.lo").vec(), r.float_tensor("norm1_range.hi").vec()};
  cb.norm2_range = {r.float_tensor("norm2_range.lo").vec(), r.float_tensor("norm2_range.hi").vec()};
  cb.folded = apply_smoothing(cb.reference, cb.smoothing);
  cb.wq = r.quant_tensor("q.wq");
  cb.wk = r.quant_tensor("q.wk");
  cb.wv = r.quant_tensor("q.wv");
  cb.wo = r.quant_tensor("q.wo");
  cb.w_gate = r.quant_tensor("q.w_gate");
  cb.w_up = r.quant_tensor("q.w_up");
  cb.w_down = r.quant_tensor("q.w_down");
  cb.norm1.g = r.i32("norm1.g");
  cb.norm1.g_shift = m.at("norm1").at("g_shift");
  cb.norm2.g = r.i32("norm2.g");
  cb.norm2.g_shift = m.at("norm2").at("g_shift");
  for (std::int32_t a : r.i32("swiglu.alpha")) {
    require(a > 0, "swiglu divisor must be positive");
    cb.swiglu.alpha.push_back(static_cast<std::uint32_t>(a));
  }
  cb.norm1_input = params_from_json(m.at("norm1_input").at("scale"),
                                    m.at("norm1_input").at("zero_point"));
  cb.norm2_input = params_from_json(m.at("norm2_input").at("scale"),
                                    m.at("norm2_input").at("zero_point"));
  cb.initial_loss = m.at("reconstruction").at("initial_loss");
  cb.final_loss = m.at("reconstruction").at("final_loss");
  cb.steps_run = m.at("reconstruction").at("steps_run");
  cb.seed = m.at("seed");
  require(cb.wq.shape() == Shape({dims.d_model, dims.d_model}) &&
              cb.w_down.shape() == Shape({dims.d_ffn, dims.d_model}),
          "quantized weight shapes do not match dims");
  require(cb.norm1.g.size() == dims.d_model && cb.norm2.g.size() == dims.d_model &&
              cb.swiglu.alpha.size() == dims.d_ffn &&
              cb.norm1_input.scale.size() == dims.d_model &&
              cb.norm2_input.scale.size() == dims.d_model,
          "calibrated parameter lengths do not match dims");
  return cb;
}

}  // namespace iqk
