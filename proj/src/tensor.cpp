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

#include "iqkernel/tensor.hpp"

#include <cmath>
#include <sstream>

#include "iqkernel/error.hpp"
#include "iqkernel/trace.hpp"

namespace iqk {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

FloatTensor::FloatTensor(Shape shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

FloatTensor::FloatTensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(data_.size() == shape_numel(shape_),
          "FloatTensor: data length " + std::to_string(data_.size()) +
              " does not match shape " + shape_str(shape_));
  for (float v : data_) {
    require(std::isfinite(v), "FloatTensor: non-finite value");
  }
}

FloatTensor FloatTensor::reshaped(Shape shape) const {
  require(shape_numel(shape) == size(), "reshape: element count differs");
  FloatTensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

FloatTensor matmul(const FloatTensor& a, const FloatTensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 operands required");
  require(a.cols() == b.rows(), "matmul: inner dimensions differ " +
                                    shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
  const std::size_t n = a.rows(), kdim = a.cols(), m = b.cols();
  IQK_TRACE_FLOAT("matmul(float)", n * kdim * m);
  FloatTensor out({n, m});
  const float* pb = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    float* po = out.row(i).data();
    const float* pa = a.row(i).data();
    for (std::size_t l = 0; l < kdim; ++l) {
      const float av = pa[l];
      if (av == 0.0f) continue;
      const float* brow = pb + l * m;
      for (std::size_t j = 0; j < m; ++j) po[j] += av * brow[j];
    }
  }
  return out;
}

FloatTensor transpose(const FloatTensor& a) {
  require(a.rank() == 2, "transpose: rank-2 operand required");
  FloatTensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

FloatTensor add(const FloatTensor& a, const FloatTensor& b) {
  require(a.shape() == b.shape(), "add: shapes differ");
  IQK_TRACE_FLOAT("add(float)", a.size());
  FloatTensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

ErrorStats compare(std::span<const float> got, std::span<const float> want) {
  require(got.size() == want.size(), "compare: sizes differ");
  ErrorStats s;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double d = static_cast<double>(got[i]) - want[i];
    s.max_abs = std::max(s.max_abs, std::abs(d));
    num += d * d;
    den += static_cast<double>(want[i]) * want[i];
  }
  if (!got.empty()) s.mse = num / static_cast<double>(got.size());
  s.rel = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  return s;
}

}  // namespace iqk
