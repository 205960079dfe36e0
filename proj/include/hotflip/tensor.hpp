// Copyright 2026 The HotFlip Authors
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

#ifndef HOTFLIP_TENSOR_HPP
#define HOTFLIP_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hotflip/errors.hpp"

namespace hotflip::diff {

/// Dense row-major tensor of 64-bit floats. Immutable after construction and
/// cheap to copy (shared storage); every constructor rejects NaN/Inf.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<const std::vector<double>>(count(shape_), 0.0)) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)),
        data_(std::make_shared<const std::vector<double>>(std::move(data))) {
    if (count(shape_) != data_->size()) {
      throw ShapeError("tensor data length " + std::to_string(data_->size()) +
                       " does not match shape product " + std::to_string(count(shape_)));
    }
    for (double v : *data_) {
      if (!std::isfinite(v)) throw NumericError("non-finite value in tensor");
    }
  }

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::size_t> shape, double v) {
    const std::size_t n = count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  bool is_scalar() const { return shape_.empty() && size() == 1; }
  double item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor");
    return (*data_)[0];
  }

  double operator[](std::size_t flat) const { return (*data_)[flat]; }
  double at2(std::size_t r, std::size_t c) const { return (*data_)[r * shape_[1] + c]; }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return (*data_)[(i * shape_[1] + j) * shape_[2] + k];
  }

  const double* data() const { return data_->data(); }
  std::span<const double> span() const { return {data_->data(), data_->size()}; }
  const std::vector<double>& vec() const { return *data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      s += std::to_string(shape_[i]);
      if (i + 1 < shape_.size()) s += "x";
    }
    return s + "]";
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

 private:
  std::vector<std::size_t> shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

}  // namespace hotflip::diff

#endif  // HOTFLIP_TENSOR_HPP
