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


#include "onoff/reconstruction.hpp"

#include <cmath>
#include <numbers>

#include "gtest/gtest.h"

#include "oracles.hpp"

using namespace onoff;

namespace {

std::vector<PhotonDistribution> phase_scan(const FockDensityMatrix &rho, double amp, int n_phi, int n_max) {
    std::vector<PhotonDistribution> out;
    const auto mod = ModulationSpec::uniform(amp, n_phi);
    for (int l = 0; l < n_phi; ++l) {
        auto p = modulated_distribution(rho, mod.displacement(l), 1e-9).vector();
        p.resize(static_cast<std::size_t>(n_max) + 1);
        out.emplace_back(p);
    }
    return out;
}

double coherent_element(double z, int n, int m) {
    return std::exp(-z * z) * std::pow(z, n + m) / std::sqrt(std::tgamma(n + 1.0) * std::tgamma(m + 1.0));
}

std::vector<Complex> radial(double r_max, int count) {
    std::vector<Complex> g;
    for (int i = 0; i < count; ++i) {
        g.emplace_back(r_max * i / (count - 1), 0.0);
    }
    return g;
}

}  // namespace

TEST(Parity, closed_form_values) {
    EXPECT_NEAR(parity_wigner_point(PhotonDistribution(onoff_test::thermal(2.4, 120))), 1.0 / 5.8, 1e-9);
    EXPECT_NEAR(1.0 / 5.8, 0.172414, 1e-6);
    EXPECT_DOUBLE_EQ(parity_wigner_point(PhotonDistribution({1.0})), 1.0);
    const auto pa = make_phase_averaged_coherent(2.1, 60);
    EXPECT_NEAR(parity_wigner_point(PhotonDistribution(pa.diagonal()), 1e-9), std::exp(-2.0 * 2.1 * 2.1),
                1e-9);
}

TEST(Parity, bounded_by_one) {
    for (double z : {0.0, 0.7, 1.8, 3.0}) {
        const auto rho = make_coherent(Complex(z, 0.3), coherent_truncation(z * z + 0.09));
        for (const auto &pt : wigner_map(rho, radial(3.5, 15)).points) {
            EXPECT_LE(std::abs(pt.value), 1.0 + 1e-12);
        }
    }
}

TEST(WignerMap, vacuum_exact) {
    const auto map = wigner_map(make_fock(0, 0), radial(3.5, 36));
    for (const auto &pt : map.points) {
        const double r = pt.alpha.real();
        EXPECT_NEAR(pt.value, std::exp(-2.0 * r * r), 1e-9);
        EXPECT_FALSE(pt.flagged);
    }
}

TEST(WignerMap, thermal_exact) {
    const double n = 2.4;
    const auto map = wigner_map(make_thermal(n, 150, 1e-12), radial(3.5, 36));
    for (const auto &pt : map.points) {
        const double r = pt.alpha.real();
        EXPECT_NEAR(pt.value, std::exp(-2.0 * r * r / (1.0 + 2.0 * n)) / (1.0 + 2.0 * n), 1e-8);
    }
}

TEST(WignerMap, phase_averaged_exact_and_ring) {
    const double z = 2.1;
    const auto map = wigner_map(make_phase_averaged_coherent(z, 70, 1e-12), radial(3.5, 71));
    double best_r = 0.0;
    double best = -1.0;
    for (const auto &pt : map.points) {
        const double r = pt.alpha.real();
        const double bessel = std::exp(-2.0 * (r * r + z * z)) * std::cyl_bessel_i(0.0, 4.0 * z * r);
        EXPECT_NEAR(pt.value, bessel, 1e-8);
        EXPECT_NEAR(pt.value, onoff_test::phase_averaged_parity_quadrature(z, r), 1e-8);
        if (pt.value > best) {
            best = pt.value;
            best_r = r;
        }
    }
    EXPECT_NEAR(best_r, z, 0.1);
}

TEST(WignerMap, conventional_rescaling) {
    const auto rho = make_coherent(Complex(0.8, -0.4), 40);
    const std::vector<Complex> g{Complex(0.3, 0.1)};
    const auto map = wigner_map(rho, g);
    const auto conv = map.conventional();
    EXPECT_NEAR(conv.points[0].value, map.points[0].value * 2.0 / std::numbers::pi, 1e-15);
    EXPECT_EQ(conv.points[0].alpha, -g[0]);
    // the parity of the displaced coherent state peaks where alpha cancels z
    EXPECT_NEAR(map.points[0].value, std::exp(-2.0 * std::norm(Complex(0.8, -0.4) + g[0])), 1e-9);
}

TEST(WignerMap, data_mode_requires_every_node) {
    std::vector<ReconstructedPoint> data(1);
    data[0].alpha = Complex(0.5, 0.0);
    data[0].em.distribution = PhotonDistribution({0.5, 0.5});
    const std::vector<Complex> ok{Complex(0.5, 0.0)};
    EXPECT_NEAR(wigner_map(data, ok).points[0].value, 0.0, 1e-15);
    EXPECT_TRUE(wigner_map(data, ok).points[0].flagged);
    const std::vector<Complex> missing{Complex(0.6, 0.0)};
    EXPECT_THROW(wigner_map(data, missing), ValidationError);
}

TEST(PhaseFourier, zero_harmonic_is_phase_average) {
    const auto rho = make_coherent(Complex(1.2, 0.5), 40);
    const auto dists = phase_scan(rho, 0.7, 8, 30);
    const auto h0 = phase_fourier(dists, 0);
    for (int n = 0; n <= 30; ++n) {
        double avg = 0.0;
        for (const auto &d : dists) avg += d[n];
        EXPECT_NEAR(h0(n).real(), avg / 8.0, 1e-15);
        EXPECT_NEAR(h0(n).imag(), 0.0, 1e-15);
    }
}

TEST(PhaseFourier, phase_invariant_state_has_no_harmonics) {
    const auto dists = phase_scan(make_thermal(1.4, 80, 1e-12), 0.9, 9, 40);
    for (int s = 1; s <= 4; ++s) {
        EXPECT_LE(phase_fourier(dists, s).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(PhaseFourier, aliasing_rejected) {
    const auto dists = phase_scan(make_fock(1, 1), 0.5, 4, 10);
    EXPECT_NO_THROW(phase_fourier(dists, 1));
    EXPECT_THROW(phase_fourier(dists, 2), ValidationError);
}

TEST(Kernel, pseudo_inverse_is_left_inverse) {
    const auto k = build_kernel(1, 1.0, 30, 8);
    EXPECT_EQ(k.rank, 9);
    const RealMatrix eye = k.inverse * k.forward;
    EXPECT_LE((eye - RealMatrix::Identity(9, 9)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_GE(k.condition, 1.0);
}

TEST(Kernel, zero_amplitude_diagonal_kernel_is_identity) {
    const auto k = build_kernel(0, 0.0, 12, 12);
    EXPECT_LE((k.forward - RealMatrix::Identity(13, 13)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_THROW(build_kernel(1, 0.0, 12, 5), ValidationError);
}

TEST(Kernel, rank_deficiency_names_recoverable_m) {
    // the s = 1 kernel at |alpha| = 4 spans singular values over seven decades
    try {
        build_kernel(1, 4.0, 31, 30, 1e-4);
        FAIL() << "expected RankDeficiencyError";
    } catch (const RankDeficiencyError &e) {
        EXPECT_GE(e.max_recoverable_m(), 0);
        EXPECT_LT(e.max_recoverable_m(), 30);
        EXPECT_NE(std::string(e.what()).find("recoverable"), std::string::npos);
    }
    EXPECT_THROW(build_kernel(1, 1.0, 5, 5), ValidationError);
}

TEST(DensityMatrix, coherent_round_trip) {
    const double z = 1.8;
    const auto rho = make_coherent(Complex(z, 0.0), 45, 1e-12);
    const auto dists = phase_scan(rho, 0.1, 12, 45);
    const auto res = reconstruct_density_matrix(dists, 0.1, 1, 44);
    ASSERT_TRUE(res.reliable());
    for (int m = 0; m <= 7; ++m) {
        EXPECT_NEAR(res.at(m, m)->real(), coherent_element(z, m, m), 1e-6);
        EXPECT_NEAR(res.at(m + 1, m)->real(), coherent_element(z, m + 1, m), 1e-6);
        EXPECT_NEAR(res.at(m + 1, m)->imag(), 0.0, 1e-8);
        EXPECT_EQ(*res.at(m, m + 1), std::conj(*res.at(m + 1, m)));
    }
    EXPECT_NEAR(coherent_element(z, 1, 0), 0.0705, 1e-4);
    EXPECT_FALSE(res.at(3, 0).has_value());
}

TEST(DensityMatrix, complex_phase_recovered) {
    const Complex z = std::polar(1.1, 0.7);
    const auto rho = make_coherent(z, 40, 1e-12);
    // harmonics s and s + N_phi alias, so N_phi is far above 2 s here
    const auto dists = phase_scan(rho, 0.6, 32, 40);
    const auto res = reconstruct_density_matrix(dists, 0.6, 2, 38);
    for (int s = 0; s <= 2; ++s) {
        for (int m = 0; m <= 5; ++m) {
            EXPECT_LE(std::abs(*res.at(m + s, m) - rho(m + s, m)), 1e-7) << s << " " << m;
        }
    }
}

TEST(DensityMatrix, thermal_has_no_coherences) {
    const auto rho = make_thermal(1.4, 90, 1e-12);
    const auto dists = phase_scan(rho, std::sqrt(1.77), 12, 80);
    const auto res = reconstruct_density_matrix(dists, std::sqrt(1.77), 2, 60);
    for (int m = 0; m <= 7; ++m) {
        EXPECT_NEAR(res.at(m, m)->real(), rho(m, m).real(), 1e-6);
        EXPECT_LE(std::abs(res.at(m, m)->imag()), 1e-8);
        EXPECT_LE(std::abs(*res.at(m + 1, m)), 1e-10);
        EXPECT_LE(std::abs(*res.at(m + 2, m)), 1e-10);
    }
}

TEST(DensityMatrix, vacuum) {
    const auto dists = phase_scan(make_fock(0, 0), 0.3, 6, 25);
    const auto res = reconstruct_density_matrix(dists, 0.3, 1, 20);
    EXPECT_NEAR(res.at(0, 0)->real(), 1.0, 1e-9);
    for (int m = 1; m <= 7; ++m) {
        EXPECT_LE(std::abs(*res.at(m, m)), 1e-9);
    }
}

TEST(DensityMatrix, validation) {
    const auto dists = phase_scan(make_fock(0, 0), 0.3, 4, 10);
    EXPECT_THROW(reconstruct_density_matrix(dists, 0.3, 2, 5), ValidationError);
    EXPECT_THROW(reconstruct_density_matrix(dists, 0.3, 1, 10), ValidationError);
    std::vector<PhotonDistribution> empty;
    EXPECT_THROW(reconstruct_density_matrix(empty, 0.3, 0, 1), ValidationError);
}

TEST(DensityMatrix, common_truncation_checks_sizes) {
    std::vector<EMResult> ems(2);
    ems[0].distribution = PhotonDistribution({0.5, 0.5});
    ems[1].distribution = PhotonDistribution({1.0});
    EXPECT_THROW(common_truncation(ems), ValidationError);
}
