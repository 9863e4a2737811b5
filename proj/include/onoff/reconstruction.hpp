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
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "onoff/detector.hpp"
#include "onoff/em.hpp"
#include "onoff/errors.hpp"
#include "onoff/fock.hpp"

namespace onoff {

/// Tail mass allowed at the truncation of a distribution entering a parity sum.
inline constexpr double kParityTailTol = 1e-4;

/// W(alpha) = sum_n (-1)^n p_n(alpha), the displaced parity.
inline double parity_wigner_point(const PhotonDistribution &p, double tail_tol = kDefaultTailTol) {
    p.validate(tail_tol);
    double w = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        w += (n % 2 == 0 ? 1.0 : -1.0) * p[n];
    }
    return w;
}

struct WignerPoint {
    Complex alpha;
    double value = 0.0;
    std::optional<double> stderr_value;
    /// Set when the distribution's weight at its truncation edge is too large
    /// for a reliable alternating sum.
    bool flagged = false;
};

/// Parity-convention Wigner values W(alpha) = sum_n (-1)^n p_n(alpha).
/// The textbook normalization is (2/pi) W(-alpha); see conventional().
struct WignerMap {
    std::vector<WignerPoint> points;

    /// Rescaled to (2/pi) W with the argument sign flipped.
    WignerMap conventional() const {
        WignerMap out;
        for (const auto &pt : points) {
            WignerPoint q = pt;
            q.alpha = -pt.alpha;
            q.value = pt.value * 2.0 / std::numbers::pi;
            if (q.stderr_value) {
                *q.stderr_value *= 2.0 / std::numbers::pi;
            }
            out.points.push_back(q);
        }
        return out;
    }
};

/// Exact mode: parities of the analytically displaced state.
inline WignerMap wigner_map(const FockDensityMatrix &rho, std::span<const Complex> grid,
                            double tail_tol = kDefaultTailTol) {
    WignerMap map;
    map.points.reserve(grid.size());
    for (const Complex &a : grid) {
        const Displacement d(a);
        const PhotonDistribution p = modulated_distribution(rho, d, tail_tol);
        map.points.push_back({a, parity_wigner_point(p, rho.tail_mass() + tail_tol), {}, false});
    }
    return map;
}

/// Reconstructed distribution at a modulation point.
struct ReconstructedPoint {
    Complex alpha;
    EMResult em;
};

/// Data mode: parities of EM reconstructions. Every grid node must be
/// matched (to 1e-9) by a reconstructed point.
inline WignerMap wigner_map(std::span<const ReconstructedPoint> data, std::span<const Complex> grid) {
    WignerMap map;
    for (const Complex &a : grid) {
        const ReconstructedPoint *hit = nullptr;
        for (const auto &rp : data) {
            if (std::abs(rp.alpha - a) < 1e-9) {
                hit = &rp;
                break;
            }
        }
        if (hit == nullptr) {
            throw ValidationError("wigner_map: no reconstructed distribution at alpha = (" +
                                  std::to_string(a.real()) + ", " + std::to_string(a.imag()) + ")");
        }
        const PhotonDistribution &p = hit->em.distribution;
        const bool flagged = p[p.size() - 1] >= kParityTailTol;
        map.points.push_back({a, parity_wigner_point(p), {}, flagged});
    }
    return map;
}

inline void check_uniform_phases(std::size_t n_phases, int s) {
    if (s < 0) {
        throw ValidationError("phase_fourier: s must be >= 0");
    }
    if (static_cast<int>(n_phases) <= 2 * s) {
        throw ValidationError("phase_fourier: aliasing, N_phi = " + std::to_string(n_phases) +
                              " must exceed 2 s = " + std::to_string(2 * s));
    }
}

/// p~_n^{(s)} = N_phi^{-1} sum_l p_n(|alpha| e^{i phi_l}) e^{i s phi_l}
/// on the uniform phase grid phi_l = 2 pi (l - 1) / N_phi.
inline Eigen::VectorXcd phase_fourier(std::span<const PhotonDistribution> dists, int s) {
    check_uniform_phases(dists.size(), s);
    const auto n_phi = static_cast<int>(dists.size());
    const auto dim = static_cast<Eigen::Index>(dists.front().size());
    for (const auto &d : dists) {
        if (static_cast<Eigen::Index>(d.size()) != dim) {
            throw ValidationError("phase_fourier: distributions must share one truncation");
        }
    }
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(dim);
    for (int l = 0; l < n_phi; ++l) {
        const Complex w = std::polar(1.0 / n_phi, 2.0 * std::numbers::pi * s * l / n_phi);
        for (Eigen::Index n = 0; n < dim; ++n) {
            out(n) += dists[static_cast<std::size_t>(l)][static_cast<std::size_t>(n)] * w;
        }
    }
    return out;
}

inline constexpr double kDefaultSvdCutoff = 1e-8;

/// Forward kernel G^{(s)}_{nm} = <n|D(|alpha|)|m+s> <n|D(|alpha|)|m>, with
/// p~^{(s)} = G^{(s)} rho^{(s)}, and its least-squares pseudo-inverse F.
struct KernelInverse {
    int s = 0;
    double amp = 0.0;
    int n_max = 0;
    int m_max = 0;
    RealMatrix forward;  // (n_max + 1) x (m_max + 1)
    RealMatrix inverse;  // (m_max + 1) x (n_max + 1)
    /// Ratio of the extreme retained singular values.
    double condition = 1.0;
    int rank = 0;
};

inline RealMatrix forward_kernel(int s, double amp, int n_max, int m_max) {
    const int dim = std::max(n_max, m_max + s) + 1;
    const RealMatrix d = displacement_matrix(Displacement(Complex(amp, 0.0)), dim).real();
    RealMatrix g(n_max + 1, m_max + 1);
    for (int n = 0; n <= n_max; ++n) {
        for (int m = 0; m <= m_max; ++m) {
            g(n, m) = d(n, m + s) * d(n, m);
        }
    }
    return g;
}

namespace detail {

inline int retained_rank(const Eigen::VectorXd &sv, double cutoff) {
    if (sv.size() == 0 || !(sv(0) > 0.0)) {
        return 0;
    }
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff * sv(0)) {
            ++r;
        }
    }
    return r;
}

}  // namespace detail

/// Builds G^{(s)} and its SVD pseudo-inverse with relative singular-value cutoff.
/// Throws RankDeficiencyError naming the largest fully resolved m when the
/// kernel cannot separate all m = 0..m_max.
inline KernelInverse build_kernel(int s, double amp, int n_max, int m_max, double cutoff = kDefaultSvdCutoff) {
    if (s < 0 || m_max < 0) {
        throw ValidationError("build_kernel: need s >= 0 and m_max >= 0");
    }
    if (!(amp >= 0.0) || (s > 0 && !(amp > 0.0))) {
        throw ValidationError("build_kernel: off-diagonal kernels need |alpha| > 0");
    }
    if (n_max < m_max + s) {
        throw ValidationError("build_kernel: need n_max >= m_max + s");
    }
    if (!(cutoff > 0.0 && cutoff < 1.0)) {
        throw ValidationError("build_kernel: cutoff must lie in (0, 1)");
    }
    KernelInverse k;
    k.s = s;
    k.amp = amp;
    k.n_max = n_max;
    k.m_max = m_max;
    k.forward = forward_kernel(s, amp, n_max, m_max);

    Eigen::JacobiSVD<RealMatrix> svd(k.forward, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd &sv = svd.singularValues();
    k.rank = detail::retained_rank(sv, cutoff);
    if (k.rank < m_max + 1) {
        int best = -1;
        for (int m = m_max - 1; m >= 0; --m) {
            Eigen::JacobiSVD<RealMatrix> sub(k.forward.leftCols(m + 1));
            if (detail::retained_rank(sub.singularValues(), cutoff) == m + 1) {
                best = m;
                break;
            }
        }
        throw RankDeficiencyError("build_kernel: s = " + std::to_string(s) + " kernel has rank " +
                                      std::to_string(k.rank) + " < " + std::to_string(m_max + 1) +
                                      "; largest safely recoverable m is " + std::to_string(best),
                                  best);
    }
    Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
    for (int i = 0; i < k.rank; ++i) {
        inv_sv(i) = 1.0 / sv(i);
    }
    k.inverse = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
    k.condition = sv(0) / sv(k.rank - 1);
    return k;
}

struct SubdiagonalDiagnostics {
    int s = 0;
    int m_max = 0;
    double condition = 0.0;
    /// ||G rho^{(s)} - p~^{(s)}||_2
    double residual = 0.0;
    bool reliable = true;
};

/// Reconstructed <m+s|rho|m> for s = 0..s_max; superdiagonals by conjugation.
struct DensityMatrixResult {
    ComplexMatrix elements;
    /// known(n, m) is true where elements(n, m) was reconstructed.
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> known;
    std::vector<SubdiagonalDiagnostics> diagnostics;
    int s_max = 0;
    int m_max = 0;

    std::optional<Complex> at(int n, int m) const {
        if (n < 0 || m < 0 || n >= elements.rows() || m >= elements.cols() || !known(n, m)) {
            return std::nullopt;
        }
        return elements(n, m);
    }
    bool reliable() const {
        for (const auto &d : diagnostics) {
            if (!d.reliable) {
                return false;
            }
        }
        return true;
    }
};

struct DensityMatrixOptions {
    double cutoff = kDefaultSvdCutoff;
    /// Residual above which a subdiagonal is flagged unreliable.
    double residual_bound = 1e-2;
};

/// Density-matrix elements from photon distributions on the uniform phase grid.
///
/// For each s the phase harmonic p~^{(s)} is inverted through F^{(s)}:
/// rho^{(s)}_m = sum_n F^{(s)}_{mn} p~^{(s)}_n, m = 0..m_max.
inline DensityMatrixResult reconstruct_density_matrix(std::span<const PhotonDistribution> dists, double amp,
                                                      int s_max, int m_max, const DensityMatrixOptions &opt = {}) {
    if (dists.empty()) {
        throw ValidationError("reconstruct_density_matrix: no distributions");
    }
    if (s_max < 0 || m_max < 0) {
        throw ValidationError("reconstruct_density_matrix: need s_max >= 0 and m_max >= 0");
    }
    check_uniform_phases(dists.size(), s_max);
    const int n_max = dists.front().n_max();
    if (n_max < m_max + s_max) {
        throw ValidationError("reconstruct_density_matrix: truncation n_max = " + std::to_string(n_max) +
                              " must be >= m_max + s_max = " + std::to_string(m_max + s_max));
    }
    DensityMatrixResult res;
    res.s_max = s_max;
    res.m_max = m_max;
    const int dim = m_max + s_max + 1;
    res.elements = ComplexMatrix::Zero(dim, dim);
    res.known = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(dim, dim, false);
    for (int s = 0; s <= s_max; ++s) {
        const Eigen::VectorXcd tilde = phase_fourier(dists, s);
        const KernelInverse k = build_kernel(s, amp, n_max, m_max, opt.cutoff);
        const Eigen::VectorXcd sub = k.inverse.cast<Complex>() * tilde;
        SubdiagonalDiagnostics diag;
        diag.s = s;
        diag.m_max = m_max;
        diag.condition = k.condition;
        diag.residual = (k.forward.cast<Complex>() * sub - tilde).norm();
        diag.reliable = diag.residual <= opt.residual_bound;
        res.diagnostics.push_back(diag);
        for (int m = 0; m <= m_max; ++m) {
            Complex v = sub(m);
            if (s == 0) {
                res.elements(m, m) = v;
            } else {
                res.elements(m + s, m) = v;
                res.elements(m, m + s) = std::conj(v);
                res.known(m, m + s) = true;
            }
            res.known(m + s, m) = true;
        }
    }
    return res;
}

/// Groups per-phase EM reconstructions into distributions on a common truncation.
inline std::vector<PhotonDistribution> common_truncation(std::span<const EMResult> results) {
    std::vector<PhotonDistribution> out;
    int n_max = -1;
    for (const auto &r : results) {
        if (n_max >= 0 && r.distribution.n_max() != n_max) {
            throw ValidationError("common_truncation: EM results use different truncations");
        }
        n_max = r.distribution.n_max();
        out.push_back(r.distribution);
    }
    return out;
}

}  // namespace onoff
