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

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "onoff/errors.hpp"

namespace onoff {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;

inline constexpr double kDefaultTailTol = 1e-6;
inline constexpr double kNegativityTol = 1e-12;
inline constexpr double kTraceSlack = 1e-12;

/// A coherent displacement D(alpha) of the field mode.
class Displacement {
  public:
    constexpr Displacement() = default;
    explicit Displacement(Complex amplitude) : amplitude_(amplitude) {
        if (!std::isfinite(amplitude.real()) || !std::isfinite(amplitude.imag())) {
            throw ValidationError("Displacement: amplitude must be finite");
        }
    }
    static Displacement polar(double magnitude, double phase) {
        return Displacement(std::polar(magnitude, phase));
    }

    Complex amplitude() const noexcept {
        return amplitude_;
    }
    double magnitude() const noexcept {
        return std::abs(amplitude_);
    }
    /// |alpha|^2
    double intensity() const noexcept {
        return std::norm(amplitude_);
    }
    double phase() const noexcept {
        return std::arg(amplitude_);
    }
    Displacement operator-() const {
        return Displacement(-amplitude_);
    }

  private:
    Complex amplitude_{0.0, 0.0};
};

/// Photon-number probabilities p_n, n = 0..n_max.
///
/// Entries are finite and non-negative. tail_mass() is the probability not
/// represented below the truncation, 1 - sum clipped at zero.
class PhotonDistribution {
  public:
    PhotonDistribution() = default;
    explicit PhotonDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
        if (probs_.empty()) {
            throw ValidationError("PhotonDistribution: empty");
        }
        for (double p : probs_) {
            if (!std::isfinite(p) || p < 0.0) {
                throw ValidationError("PhotonDistribution: entries must be finite and non-negative");
            }
        }
    }

    std::span<const double> probs() const noexcept {
        return probs_;
    }
    const std::vector<double> &vector() const noexcept {
        return probs_;
    }
    std::size_t size() const noexcept {
        return probs_.size();
    }
    int n_max() const noexcept {
        return static_cast<int>(probs_.size()) - 1;
    }
    double operator[](std::size_t n) const {
        return probs_[n];
    }
    double sum() const noexcept {
        return std::accumulate(probs_.begin(), probs_.end(), 0.0);
    }
    double tail_mass() const noexcept {
        return std::max(0.0, 1.0 - sum());
    }
    double mean() const noexcept {
        double m = 0.0;
        for (std::size_t n = 0; n < probs_.size(); ++n) {
            m += static_cast<double>(n) * probs_[n];
        }
        return m;
    }

    /// Throws TruncationError if the sum lies outside [1 - tail_tol, 1 + 1e-12].
    void validate(double tail_tol = kDefaultTailTol) const {
        const double s = sum();
        if (s > 1.0 + kTraceSlack) {
            throw ValidationError("PhotonDistribution: sum exceeds 1 (" + std::to_string(s) + ")");
        }
        if (s < 1.0 - tail_tol) {
            throw TruncationError("PhotonDistribution: tail mass " + std::to_string(1.0 - s) +
                                  " exceeds tolerance " + std::to_string(tail_tol));
        }
    }

    friend bool operator==(const PhotonDistribution &, const PhotonDistribution &) = default;

  private:
    std::vector<double> probs_;
};

/// Truncated density matrix rho_km, k, m = 0..n_max, in the number basis.
///
/// Construction enforces exact Hermiticity of the stored entries, a real
/// non-negative diagonal (to 1e-12) and trace in [1 - tail_tol, 1 + 1e-12].
class FockDensityMatrix {
  public:
    explicit FockDensityMatrix(ComplexMatrix rho, double tail_tol = kDefaultTailTol)
        : rho_(std::move(rho)), tail_tol_(tail_tol) {
        if (rho_.rows() == 0 || rho_.rows() != rho_.cols()) {
            throw ValidationError("FockDensityMatrix: matrix must be square and non-empty");
        }
        if (!(tail_tol >= 0.0 && tail_tol < 1.0)) {
            throw ValidationError("FockDensityMatrix: tail_tol must lie in [0, 1)");
        }
        const Eigen::Index d = rho_.rows();
        for (Eigen::Index k = 0; k < d; ++k) {
            for (Eigen::Index m = 0; m < d; ++m) {
                const Complex v = rho_(k, m);
                if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
                    throw ValidationError("FockDensityMatrix: non-finite entry");
                }
                if (v != std::conj(rho_(m, k))) {
                    throw ValidationError("FockDensityMatrix: matrix is not Hermitian");
                }
            }
            const Complex diag = rho_(k, k);
            if (std::abs(diag.imag()) > kNegativityTol || diag.real() < -kNegativityTol) {
                throw ValidationError("FockDensityMatrix: diagonal must be real and non-negative");
            }
        }
        const double tr = trace();
        if (tr > 1.0 + kTraceSlack) {
            throw ValidationError("FockDensityMatrix: trace exceeds 1 (" + std::to_string(tr) + ")");
        }
        if (tr < 1.0 - tail_tol) {
            throw TruncationError("FockDensityMatrix: truncation tail " + std::to_string(1.0 - tr) +
                                  " exceeds tolerance " + std::to_string(tail_tol) +
                                  "; increase n_max");
        }
    }

    int dim() const noexcept {
        return static_cast<int>(rho_.rows());
    }
    int n_max() const noexcept {
        return dim() - 1;
    }
    const ComplexMatrix &matrix() const noexcept {
        return rho_;
    }
    Complex operator()(int k, int m) const {
        return rho_(k, m);
    }
    double tail_tol() const noexcept {
        return tail_tol_;
    }
    double trace() const noexcept {
        double t = 0.0;
        for (Eigen::Index k = 0; k < rho_.rows(); ++k) {
            t += rho_(k, k).real();
        }
        return t;
    }
    double tail_mass() const noexcept {
        return std::max(0.0, 1.0 - trace());
    }
    PhotonDistribution diagonal() const {
        std::vector<double> p(static_cast<std::size_t>(dim()));
        for (int n = 0; n < dim(); ++n) {
            p[static_cast<std::size_t>(n)] = std::max(0.0, rho_(n, n).real());
        }
        return PhotonDistribution(std::move(p));
    }
    double mean_photon_number() const noexcept {
        double m = 0.0;
        for (int n = 1; n < dim(); ++n) {
            m += n * rho_(n, n).real();
        }
        return m;
    }
    /// <a> = Tr(rho a) = sum_n sqrt(n) rho(n, n-1)
    Complex mean_field() const noexcept {
        Complex a{0.0, 0.0};
        for (int n = 1; n < dim(); ++n) {
            a += std::sqrt(static_cast<double>(n)) * rho_(n, n - 1);
        }
        return a;
    }

  private:
    ComplexMatrix rho_;
    double tail_tol_;
};

/// Forces exact Hermiticity: lower triangle is the conjugate of the upper,
/// diagonal is made real.
inline ComplexMatrix hermitian_part(const ComplexMatrix &m) {
    ComplexMatrix h(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        h(i, i) = Complex(m(i, i).real(), 0.0);
        for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
            const Complex v = (m(i, j) + std::conj(m(j, i))) * 0.5;
            h(i, j) = v;
            h(j, i) = std::conj(v);
        }
    }
    return h;
}

struct DisplacementOptions {
    /// Upper bound on any intermediate natural-log magnitude.
    double log_bound = 700.0;
};

namespace detail {

/// Value stored as mantissa * exp(log_scale).
struct ScaledValue {
    double mantissa;
    double log_scale;

    double log_abs() const noexcept {
        return std::log(std::abs(mantissa)) + log_scale;
    }
};

/// Associated Laguerre values L_j^{(k)}(x), j = 0..degree, by the upward
/// three-term recurrence with periodic rescaling.
inline std::vector<ScaledValue> laguerre_sequence(int k, double x, int degree) {
    constexpr double kRescaleAbove = 1e150;
    std::vector<ScaledValue> out;
    out.reserve(static_cast<std::size_t>(degree) + 1);
    double prev = 1.0;
    double scale = 0.0;
    out.push_back({1.0, 0.0});
    if (degree == 0) {
        return out;
    }
    double cur = 1.0 + k - x;
    out.push_back({cur, 0.0});
    for (int j = 1; j < degree; ++j) {
        const double next = ((2.0 * j + 1.0 + k - x) * cur - (j + k) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
        if (std::abs(cur) > kRescaleAbove) {
            prev /= kRescaleAbove;
            cur /= kRescaleAbove;
            scale += std::log(kRescaleAbove);
        }
        out.push_back({cur, scale});
    }
    return out;
}

/// Real factor sqrt(m!/(m+k)!) |alpha|^k e^{-|alpha|^2/2} L_m^{(k)}(|alpha|^2).
inline double displacement_real_factor(int m, int k, double magnitude, const ScaledValue &laguerre,
                                       const DisplacementOptions &opt) {
    if (laguerre.mantissa == 0.0) {
        return 0.0;
    }
    if (magnitude == 0.0) {
        return k == 0 ? laguerre.mantissa * std::exp(laguerre.log_scale) : 0.0;
    }
    const double log_lag = laguerre.log_abs();
    if (log_lag > opt.log_bound) {
        throw TruncationError("displacement element: Laguerre magnitude exceeds log bound; reduce truncation");
    }
    const double log_pref = 0.5 * (std::lgamma(m + 1.0) - std::lgamma(m + k + 1.0)) + k * std::log(magnitude) -
                            0.5 * magnitude * magnitude;
    const double log_total = log_pref + log_lag;
    if (log_total > opt.log_bound) {
        throw TruncationError("displacement element: magnitude exceeds log bound");
    }
    const double mag = std::exp(log_total);
    return laguerre.mantissa < 0.0 ? -mag : mag;
}

}  // namespace detail

/// <n|D(alpha)|m>.
///
/// For n >= m this is sqrt(m!/n!) alpha^{n-m} e^{-|alpha|^2/2} L_m^{(n-m)}(|alpha|^2);
/// the n < m case follows from D^dag(alpha) = D(-alpha).
inline Complex displacement_element(int n, int m, const Displacement &alpha, const DisplacementOptions &opt = {}) {
    if (n < 0 || m < 0) {
        throw ValidationError("displacement_element: indices must be non-negative");
    }
    const bool lower = n >= m;
    const int k = lower ? n - m : m - n;
    const int j = lower ? m : n;
    const double r = alpha.magnitude();
    const auto lag = detail::laguerre_sequence(k, r * r, j);
    const double real_factor = detail::displacement_real_factor(j, k, r, lag.back(), opt);
    if (k == 0) {
        return {real_factor, 0.0};
    }
    // lower: e^{ik theta} R; upper: (-1)^k e^{-ik theta} R
    const double theta = alpha.phase();
    const double sign = (lower || k % 2 == 0) ? 1.0 : -1.0;
    return sign * std::polar(real_factor, lower ? k * theta : -k * theta);
}

/// Matrix of <n|D(alpha)|m> for n, m = 0..dim-1, built diagonal by diagonal
/// so each Laguerre recurrence is run once.
inline ComplexMatrix displacement_matrix(const Displacement &alpha, int dim, const DisplacementOptions &opt = {}) {
    if (dim <= 0) {
        throw ValidationError("displacement_matrix: dim must be positive");
    }
    const double r = alpha.magnitude();
    const double theta = alpha.phase();
    ComplexMatrix d = ComplexMatrix::Zero(dim, dim);
    for (int k = 0; k < dim; ++k) {
        const auto lag = detail::laguerre_sequence(k, r * r, dim - 1 - k);
        const Complex lower_phase = std::polar(1.0, k * theta);
        const Complex upper_phase = (k % 2 == 0 ? 1.0 : -1.0) * std::polar(1.0, -k * theta);
        for (int m = 0; m + k < dim; ++m) {
            const double rf = detail::displacement_real_factor(m, k, r, lag[static_cast<std::size_t>(m)], opt);
            d(m + k, m) = rf * lower_phase;
            if (k != 0) {
                d(m, m + k) = rf * upper_phase;
            }
        }
    }
    return d;
}

/// Working dimension padding for displaced states: ceil(4|alpha|^2 + 8|alpha| + 10).
inline int displacement_padding(double magnitude) {
    return static_cast<int>(std::ceil(4.0 * magnitude * magnitude + 8.0 * magnitude + 10.0));
}

inline int padded_n_max(int n_max, double magnitude) {
    return n_max + displacement_padding(magnitude);
}

/// D(alpha) rho D^dag(alpha) restricted to indices 0..out_n_max.
///
/// Exact for the represented support of rho; truncation only removes rows
/// and columns above out_n_max.
inline ComplexMatrix displace_matrix(const FockDensityMatrix &rho, const Displacement &alpha, int out_n_max,
                                     const DisplacementOptions &opt = {}) {
    if (out_n_max < 0) {
        throw ValidationError("displace_matrix: out_n_max must be non-negative");
    }
    const int d_in = rho.dim();
    const int d_out = out_n_max + 1;
    const ComplexMatrix dm = displacement_matrix(alpha, std::max(d_in, d_out), opt);
    const ComplexMatrix block = dm.topLeftCorner(d_out, d_in);
    return hermitian_part(block * rho.matrix() * block.adjoint());
}

/// Displaced state truncated to out_n_max; its tail tolerance is that of rho.
inline FockDensityMatrix displace(const FockDensityMatrix &rho, const Displacement &alpha, int out_n_max,
                                  double tail_tol = kDefaultTailTol, const DisplacementOptions &opt = {}) {
    ComplexMatrix m = displace_matrix(rho, alpha, out_n_max, opt);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (m(i, i).real() < 0.0 && m(i, i).real() >= -kNegativityTol) {
            m(i, i) = 0.0;
        }
    }
    return FockDensityMatrix(std::move(m), tail_tol);
}

/// Photon distribution p_n(alpha) = <n|D(alpha) rho D^dag(alpha)|n>, n = 0..n_max.
///
/// The tail mass lost above n_max (relative to tr rho) must stay below
/// tail_tol; pick n_max via padded_n_max() for displaced states. Negative
/// entries above -1e-12 are clipped and the total is restored.
inline PhotonDistribution displaced_photon_distribution(const FockDensityMatrix &rho, const Displacement &alpha,
                                                        int n_max, double tail_tol = kDefaultTailTol,
                                                        const DisplacementOptions &opt = {}) {
    if (n_max < 0) {
        throw ValidationError("displaced_photon_distribution: n_max must be non-negative");
    }
    const int d_in = rho.dim();
    const int d_out = n_max + 1;
    const ComplexMatrix dm = displacement_matrix(alpha, std::max(d_in, d_out), opt);
    const ComplexMatrix block = dm.topLeftCorner(d_out, d_in);
    const ComplexMatrix left = block * rho.matrix();
    std::vector<double> p(static_cast<std::size_t>(d_out));
    double raw_sum = 0.0;
    double clipped_sum = 0.0;
    for (int n = 0; n < d_out; ++n) {
        double v = 0.0;
        for (int m = 0; m < d_in; ++m) {
            v += (left(n, m) * std::conj(block(n, m))).real();
        }
        if (v < 0.0) {
            if (v < -kNegativityTol) {
                throw NumericalError("displaced_photon_distribution: negative probability " + std::to_string(v));
            }
            raw_sum += v;
            v = 0.0;
        } else {
            raw_sum += v;
        }
        clipped_sum += v;
        p[static_cast<std::size_t>(n)] = v;
    }
    if (clipped_sum > 0.0 && clipped_sum != raw_sum && raw_sum > 0.0) {
        const double scale = raw_sum / clipped_sum;
        for (double &x : p) {
            x *= scale;
        }
    }
    const double lost = rho.trace() - raw_sum;
    if (lost > tail_tol) {
        throw TruncationError("displaced_photon_distribution: tail mass " + std::to_string(lost) +
                              " above n_max=" + std::to_string(n_max) + " exceeds tolerance; increase n_max");
    }
    return PhotonDistribution(std::move(p));
}

/// Coherent state |z><z|.
inline FockDensityMatrix make_coherent(Complex z, int n_max, double tail_tol = kDefaultTailTol) {
    if (n_max < 0) {
        throw ValidationError("make_coherent: n_max must be non-negative");
    }
    const int d = n_max + 1;
    Eigen::VectorXcd c(d);
    c(0) = std::exp(-0.5 * std::norm(z));
    for (int k = 1; k < d; ++k) {
        c(k) = c(k - 1) * z / std::sqrt(static_cast<double>(k));
    }
    ComplexMatrix rho(d, d);
    for (int k = 0; k < d; ++k) {
        rho(k, k) = std::norm(c(k));
        for (int m = k + 1; m < d; ++m) {
            rho(k, m) = c(k) * std::conj(c(m));
            rho(m, k) = std::conj(rho(k, m));
        }
    }
    return FockDensityMatrix(std::move(rho), tail_tol);
}

inline std::vector<double> poisson_probs(double mean, int n_max) {
    std::vector<double> p(static_cast<std::size_t>(n_max) + 1);
    p[0] = std::exp(-mean);
    for (int n = 1; n <= n_max; ++n) {
        p[static_cast<std::size_t>(n)] = p[static_cast<std::size_t>(n) - 1] * mean / n;
    }
    return p;
}

inline FockDensityMatrix diagonal_state(const std::vector<double> &p, double tail_tol) {
    const auto d = static_cast<Eigen::Index>(p.size());
    ComplexMatrix rho = ComplexMatrix::Zero(d, d);
    for (Eigen::Index n = 0; n < d; ++n) {
        rho(n, n) = p[static_cast<std::size_t>(n)];
    }
    return FockDensityMatrix(std::move(rho), tail_tol);
}

/// Thermal state, rho_nn = n_th^n / (1 + n_th)^{n+1}.
inline FockDensityMatrix make_thermal(double n_th, int n_max, double tail_tol = kDefaultTailTol) {
    if (!(n_th >= 0.0) || !std::isfinite(n_th) || n_max < 0) {
        throw ValidationError("make_thermal: need n_th >= 0 and n_max >= 0");
    }
    std::vector<double> p(static_cast<std::size_t>(n_max) + 1);
    const double ratio = n_th / (1.0 + n_th);
    p[0] = 1.0 / (1.0 + n_th);
    for (int n = 1; n <= n_max; ++n) {
        p[static_cast<std::size_t>(n)] = p[static_cast<std::size_t>(n) - 1] * ratio;
    }
    return diagonal_state(p, tail_tol);
}

/// Phase-averaged coherent state of amplitude z: Poisson(z^2) diagonal, no coherences.
inline FockDensityMatrix make_phase_averaged_coherent(double z, int n_max, double tail_tol = kDefaultTailTol) {
    if (!std::isfinite(z) || n_max < 0) {
        throw ValidationError("make_phase_averaged_coherent: invalid arguments");
    }
    return diagonal_state(poisson_probs(z * z, n_max), tail_tol);
}

/// Number state |n><n|.
inline FockDensityMatrix make_fock(int n, int n_max) {
    if (n < 0 || n > n_max) {
        throw ValidationError("make_fock: need 0 <= n <= n_max");
    }
    ComplexMatrix rho = ComplexMatrix::Zero(n_max + 1, n_max + 1);
    rho(n, n) = 1.0;
    return FockDensityMatrix(std::move(rho), 0.0);
}

/// Truncation whose Poisson(mean) tail is far below the default tail tolerance.
inline int coherent_truncation(double mean) {
    return static_cast<int>(std::ceil(mean + 8.0 * std::sqrt(mean) + 12.0));
}

}  // namespace onoff
