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

#ifndef HOTFLIP_ERRORS_HPP
#define HOTFLIP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hotflip {

/// Shape or dimension mismatch between tensors.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value, out-of-range index, or other numeric contract violation.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API misuse: an operation applied to a state it is not legal for.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Text contains a character the alphabet cannot represent.
struct EncodeError : std::runtime_error {
  explicit EncodeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training diverged or was otherwise unable to proceed.
struct TrainError : std::runtime_error {
  explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A search was asked for a move but no legal move exists.
struct ExhaustionError : std::runtime_error {
  explicit ExhaustionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File could not be opened or written.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hotflip

#endif  // HOTFLIP_ERRORS_HPP
