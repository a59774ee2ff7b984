// Copyright 2026 The ELSA-Toy Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ELSA_ERRORS_H_
#define ELSA_ERRORS_H_

#include <stdexcept>
#include <string>

namespace elsa {

// Base of every error raised by the library. The CLI maps these to exit
// code 1 (user/input error); anything else is reported as internal (2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated files, unknown format versions.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Inputs that are well-formed but unusable (silent audio, empty corpus, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace elsa

#endif  // ELSA_ERRORS_H_
