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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "iqkernel/block.hpp"
#include "iqkernel/calibrated.hpp"
#include "iqkernel/quant.hpp"
#include "iqkernel/tensor.hpp"

namespace iqk {

/// Tensor file: a UTF-8 JSON manifest plus a little-endian binary sidecar
/// (same path with ".bin" appended). Each entry records name, shape, dtype
/// ("f32" | "u8" | "u16" | "i32"), byte offset and length; quantized entries
/// also record bits, per-slice scale (m, k), zero-point and axis.
class TensorFileWriter {
 public:
  void add(const std::string& name, const FloatTensor& t);
  void add(const std::string& name, const QuantTensor& q);
  void add_i32(const std::string& name, const Shape& shape, const std::vector<std::int32_t>& v);
  void add_u16(const std::string& name, const Shape& shape, const std::vector<std::uint16_t>& v);

  nlohmann::json& meta() { return meta_; }

  /// Writes `path` and `path.bin`.
  void write(const std::filesystem::path& path) const;

 private:
  nlohmann::json entry(const std::string& name, const char* dtype, const Shape& shape,
                       std::size_t nbytes);
  nlohmann::json meta_ = nlohmann::json::object();
  nlohmann::json tensors_ = nlohmann::json::array();
  std::vector<std::uint8_t> blob_;
};

class TensorFileReader {
 public:
  explicit TensorFileReader(const std::filesystem::path& path);

  const nlohmann::json& meta() const { return meta_; }
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::vector<std::string> names() const;

  FloatTensor float_tensor(const std::string& name) const;
  QuantTensor quant_tensor(const std::string& name) const;
  std::vector<std::int32_t> i32(const std::string& name) const;
  std::vector<std::uint16_t> u16(const std::string& name) const;
  Shape shape(const std::string& name) const;

 private:
  const nlohmann::json& entry(const std::string& name, const char* dtype) const;
  std::span<const std::uint8_t> bytes(const nlohmann::json& e) const;

  nlohmann::json meta_;
  std::map<std::string, nlohmann::json> index_;
  std::vector<std::uint8_t> blob_;
};

// ---- Artifacts of the CLI ---------------------------------------------------

void save_block(const std::filesystem::path& path, const BlockWeights& w, std::uint64_t seed);
BlockWeights load_block(const std::filesystem::path& path);

/// A list of [tokens, d_model] sequences stored as one [n, tokens, d] tensor.
void save_sequences(const std::filesystem::path& path, const std::vector<FloatTensor>& xs,
                    const nlohmann::json& meta);
std::vector<FloatTensor> load_sequences(const std::filesystem::path& path);

void save_calibrated(const std::filesystem::path& path, const CalibratedBlock& cb);
CalibratedBlock load_calibrated(const std::filesystem::path& path);

}  // namespace iqk
