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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace iqk {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float32 tensor. Values are checked to be finite when the
/// tensor is built from external data.
class FloatTensor {
 public:
  FloatTensor() = default;
  explicit FloatTensor(Shape shape);  // zero-filled
  FloatTensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessors.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.size() > 1 ? shape_[1] : 1; }
  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(data_).subspan(r * cols(), cols());
  }
  std::span<float> row(std::size_t r) {
    return std::span<float>(data_).subspan(r * cols(), cols());
  }

  FloatTensor reshaped(Shape shape) const;

  friend bool operator==(const FloatTensor&, const FloatTensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Small float helpers shared by the reference paths.
FloatTensor matmul(const FloatTensor& a, const FloatTensor& b);
FloatTensor transpose(const FloatTensor& a);
FloatTensor add(const FloatTensor& a, const FloatTensor& b);

struct ErrorStats {
  double max_abs = 0.0;
  double mse = 0.0;
  double rel = 0.0;  // ||a - b||_2 / ||b||_2
};
ErrorStats compare(std::span<const float> got, std::span<const float> want);

}  // namespace iqk
