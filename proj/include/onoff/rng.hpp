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

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "onoff/errors.hpp"

namespace onoff {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Folds a seed and a list of coordinates into a substream key.
/// Distinct coordinate tuples give unrelated keys.
inline std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc908ULL);
    for (std::uint64_t c : coords) {
        h = mix64(h ^ mix64(c + 0x3c6ef372fe94f82bULL));
    }
    return h;
}

/// Counter-based generator: the i-th draw is a pure function of (key, i).
class CounterStream {
  public:
    explicit CounterStream(std::uint64_t key) noexcept : key_(key) {
    }

    std::uint64_t next_u64() noexcept {
        return mix64(key_ ^ mix64(counter_++));
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    std::uint64_t key() const noexcept {
        return key_;
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Binomial(trials, prob) variate by inversion of the CDF at uniform u.
///
/// The pmf is evaluated by ratio recurrence outward from the mode over a
/// window of +-(12 sigma + 12); the mass outside the window is below 1e-30.
/// The result is a deterministic, platform-independent function of u.
inline std::int64_t binomial_inversion(std::int64_t trials, double prob, double u) {
    if (trials < 0 || !(prob >= 0.0 && prob <= 1.0) || !(u >= 0.0 && u < 1.0)) {
        throw ValidationError("binomial_inversion: invalid arguments");
    }
    if (trials == 0 || prob == 0.0) {
        return 0;
    }
    if (prob == 1.0) {
        return trials;
    }
    const double q = 1.0 - prob;
    const double n = static_cast<double>(trials);
    const double sigma = std::sqrt(n * prob * q);
    std::int64_t mode = static_cast<std::int64_t>(std::floor((n + 1.0) * prob));
    if (mode > trials) {
        mode = trials;
    }
    const auto half = static_cast<std::int64_t>(std::ceil(12.0 * sigma + 12.0));
    const std::int64_t lo = mode - half < 0 ? 0 : mode - half;
    const std::int64_t hi = mode + half > trials ? trials : mode + half;

    std::vector<double> w(static_cast<std::size_t>(hi - lo + 1));
    const auto at = [&](std::int64_t j) -> double & {
        return w[static_cast<std::size_t>(j - lo)];
    };
    const double odds = prob / q;
    at(mode) = 1.0;
    for (std::int64_t j = mode; j < hi; ++j) {
        at(j + 1) = at(j) * (static_cast<double>(trials - j) / static_cast<double>(j + 1)) * odds;
    }
    for (std::int64_t j = mode; j > lo; --j) {
        at(j - 1) = at(j) * (static_cast<double>(j) / static_cast<double>(trials - j + 1)) / odds;
    }
    double total = 0.0;
    for (double x : w) {
        total += x;
    }
    const double target = u * total;
    double acc = 0.0;
    for (std::int64_t j = lo; j <= hi; ++j) {
        acc += at(j);
        if (target < acc) {
            return j;
        }
    }
    return hi;
}

}  // namespace onoff
