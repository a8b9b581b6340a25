// Copyright 2026 The dred-toolkit Authors
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

#ifndef DRED_ERRORS_HPP
#define DRED_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dred {

// Malformed or truncated serialized data (files, wire payloads).
// Precondition violations use std::invalid_argument instead.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dred

#endif  // DRED_ERRORS_HPP
