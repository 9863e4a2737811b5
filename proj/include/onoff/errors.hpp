// Copyright 2026 The onoff-tomo Authors
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

#include <stdexcept>
#include <string>

namespace onoff {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid input: violated precondition or malformed configuration.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// The truncated Fock space is too small for the requested operation.
class TruncationError : public Error {
  public:
    using Error::Error;
};

/// Numerical failure: vanishing denominators, non-convergence, rank loss.
class NumericalError : public Error {
  public:
    using Error::Error;
};

class IllConditionedError : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

/// The inversion kernel cannot resolve all requested matrix elements.
class RankDeficiencyError : public NumericalError {
  public:
    RankDeficiencyError(const std::string &what, int max_recoverable_m)
        : NumericalError(what), max_recoverable_m_(max_recoverable_m) {
    }
    /// Largest m for which the kernel still has full column rank, or -1.
    int max_recoverable_m() const noexcept {
        return max_recoverable_m_;
    }

  private:
    int max_recoverable_m_;
};

class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace onoff
