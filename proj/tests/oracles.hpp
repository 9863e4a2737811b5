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

// Independent reference computations used by the test suites. Nothing here
// calls into the library's numerical paths.

#pragma once

#include <cmath>
#include <complex>
#include <vector>

namespace onoff_test {

using cld = std::complex<long double>;

/// <n|D(alpha)|m> from the normal-ordered expansion
/// sqrt(n! m!) e^{-|a|^2/2} sum_k (-conj a)^{m-k} a^{n-k} / (k! (n-k)! (m-k)!).
inline std::complex<double> displacement_by_sum(int n, int m, std::complex<double> alpha) {
    const cld a(alpha.real(), alpha.imag());
    const cld ma = -std::conj(a);
    cld acc = 0;
    const int top = std::min(n, m);
    for (int k = 0; k <= top; ++k) {
        const long double logc = 0.5L * (std::lgamma((long double)n + 1) + std::lgamma((long double)m + 1)) -
                                 std::lgamma((long double)k + 1) - std::lgamma((long double)(n - k) + 1) -
                                 std::lgamma((long double)(m - k) + 1);
        acc += std::exp(logc) * std::pow(ma, (long double)(m - k)) * std::pow(a, (long double)(n - k));
    }
    acc *= std::exp(-0.5L * std::norm(a));
    return {(double)acc.real(), (double)acc.imag()};
}

inline double poisson_pmf(double mean, int n) {
    if (mean == 0.0) {
        return n == 0 ? 1.0 : 0.0;
    }
    return std::exp(n * std::log(mean) - mean - std::lgamma(n + 1.0));
}

inline std::vector<double> poisson(double mean, int n_max) {
    std::vector<double> p(n_max + 1);
    for (int n = 0; n <= n_max; ++n) {
        p[n] = poisson_pmf(mean, n);
    }
    return p;
}

inline std::vector<double> thermal(double n_th, int n_max) {
    std::vector<double> p(n_max + 1);
    for (int n = 0; n <= n_max; ++n) {
        p[n] = std::pow(n_th, n) / std::pow(1.0 + n_th, n + 1.0);
    }
    return p;
}

/// |<n|z>|^2 for a coherent amplitude z.
inline double coherent_overlap_sq(std::complex<double> z, int n) {
    return poisson_pmf(std::norm(z), n);
}

/// Exact binomial pmf via log-gamma.
inline double binomial_pmf(long long trials, double prob, long long k) {
    if (prob == 0.0) return k == 0 ? 1.0 : 0.0;
    if (prob == 1.0) return k == trials ? 1.0 : 0.0;
    return std::exp(std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0) +
                    k * std::log(prob) + (trials - k) * std::log1p(-prob));
}

inline double total_variation(const std::vector<double> &a, const std::vector<double> &b) {
    const std::size_t n = std::max(a.size(), b.size());
    double tv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = i < a.size() ? a[i] : 0.0;
        const double y = i < b.size() ? b[i] : 0.0;
        tv += std::abs(x - y);
    }
    return 0.5 * tv;
}

/// Parity of a phase-averaged coherent state z displaced by r, by
/// trapezoidal quadrature over the phase: mean over theta of e^{-2|r + z e^{i theta}|^2}.
inline double phase_averaged_parity_quadrature(double z, double r, int nodes = 2048) {
    double acc = 0.0;
    for (int j = 0; j < nodes; ++j) {
        const double th = 2.0 * M_PI * j / nodes;
        acc += std::exp(-2.0 * std::norm(std::complex<double>(r, 0.0) + std::polar(z, th)));
    }
    return acc / nodes;
}

}  // namespace onoff_test
