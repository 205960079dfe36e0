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

#ifndef HOTFLIP_TESTS_TESTUTIL_HPP
#define HOTFLIP_TESTS_TESTUTIL_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hotflip/rng.hpp"
#include "hotflip/tensor.hpp"

namespace hotflip::testutil {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Central-difference oracle, independent of the tape: f is re-evaluated from
// scratch on perturbed copies of a flat parameter vector.
inline double central_diff(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> at, std::size_t coord,
                           double h = 1e-4) {
  const double x0 = at[coord];
  at[coord] = x0 + h;
  const double fp = f(at);
  at[coord] = x0 - h;
  const double fm = f(at);
  at[coord] = x0;
  return (fp - fm) / (2.0 * h);
}

inline std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -1.0,
                                      double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline diff::Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                                  double lo = -1.0, double hi = 1.0) {
  auto data = random_vec(diff::Tensor::count(shape), rng, lo, hi);
  return diff::Tensor(std::move(shape), std::move(data));
}

}  // namespace hotflip::testutil

#endif  // HOTFLIP_TESTS_TESTUTIL_HPP
