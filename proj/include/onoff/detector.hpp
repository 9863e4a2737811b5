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
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "onoff/errors.hpp"
#include "onoff/fock.hpp"
#include "onoff/parallel.hpp"
#include "onoff/rng.hpp"

namespace onoff {

/// Strictly increasing detector efficiencies eta_k in (0, 1].
class EfficiencyGrid {
  public:
    EfficiencyGrid() = default;
    explicit EfficiencyGrid(std::vector<double> etas) : etas_(std::move(etas)) {
        if (etas_.size() < 2) {
            throw ValidationError("EfficiencyGrid: need at least 2 efficiencies");
        }
        for (std::size_t k = 0; k < etas_.size(); ++k) {
            const double e = etas_[k];
            if (!(e >= 0.0 && e <= 1.0)) {
                throw ValidationError("EfficiencyGrid: efficiencies must lie in [0, 1]");
            }
            if (k > 0 && !(e > etas_[k - 1])) {
                throw ValidationError("EfficiencyGrid: efficiencies must be strictly increasing");
            }
        }
    }

    /// eta_k = k * eta_max / K, k = 1..K.
    static EfficiencyGrid uniform(int count, double eta_max) {
        if (count < 2 || !(eta_max > 0.0 && eta_max <= 1.0)) {
            throw ValidationError("EfficiencyGrid::uniform: need K >= 2 and 0 < eta_max <= 1");
        }
        std::vector<double> etas(static_cast<std::size_t>(count));
        for (int k = 1; k <= count; ++k) {
            etas[static_cast<std::size_t>(k) - 1] = k * eta_max / count;
        }
        etas.back() = eta_max;
        return EfficiencyGrid(std::move(etas));
    }

    std::span<const double> etas() const noexcept {
        return etas_;
    }
    std::size_t size() const noexcept {
        return etas_.size();
    }
    double operator[](std::size_t k) const {
        return etas_[k];
    }
    double max() const noexcept {
        return etas_.back();
    }

    friend bool operator==(const EfficiencyGrid &, const EfficiencyGrid &) = default;

  private:
    std::vector<double> etas_;
};

inline constexpr double kWignerEtaMax = 0.29;
inline constexpr double kDensityMatrixEtaMax = 0.67;
inline constexpr int kDefaultGridSize = 25;
inline constexpr std::int64_t kDefaultShots = 30000;

/// The two detection chains: (eta_max = 0.29, eta_max = 0.67).
inline std::pair<EfficiencyGrid, EfficiencyGrid> default_grids(int count = kDefaultGridSize) {
    return {EfficiencyGrid::uniform(count, kWignerEtaMax), EfficiencyGrid::uniform(count, kDensityMatrixEtaMax)};
}

/// Displacement amplitude |alpha| with the modulation phases phi_l.
class ModulationSpec {
  public:
    ModulationSpec() = default;
    ModulationSpec(double amp, std::vector<double> phases) : amp_(amp), phases_(std::move(phases)) {
        if (!(amp >= 0.0) || !std::isfinite(amp)) {
            throw ValidationError("ModulationSpec: amplitude must be finite and >= 0");
        }
        if (phases_.empty()) {
            throw ValidationError("ModulationSpec: need at least one phase");
        }
        for (std::size_t i = 0; i < phases_.size(); ++i) {
            if (!std::isfinite(phases_[i])) {
                throw ValidationError("ModulationSpec: phases must be finite");
            }
            for (std::size_t j = 0; j < i; ++j) {
                const double d = std::remainder(phases_[i] - phases_[j], 2.0 * std::numbers::pi);
                if (std::abs(d) < 1e-12) {
                    throw ValidationError("ModulationSpec: phases must be distinct modulo 2 pi");
                }
            }
        }
    }

    /// phi_l = 2 pi (l - 1) / N_phi.
    static ModulationSpec uniform(double amp, int n_phases) {
        if (n_phases < 1) {
            throw ValidationError("ModulationSpec::uniform: need N_phi >= 1");
        }
        std::vector<double> phases(static_cast<std::size_t>(n_phases));
        for (int l = 0; l < n_phases; ++l) {
            phases[static_cast<std::size_t>(l)] = 2.0 * std::numbers::pi * l / n_phases;
        }
        return ModulationSpec(amp, std::move(phases));
    }

    double amp() const noexcept {
        return amp_;
    }
    std::span<const double> phases() const noexcept {
        return phases_;
    }
    std::size_t n_phases() const noexcept {
        return phases_.size();
    }
    Displacement displacement(std::size_t l) const {
        return Displacement::polar(amp_, phases_.at(l));
    }

    friend bool operator==(const ModulationSpec &, const ModulationSpec &) = default;

  private:
    double amp_ = 0.0;
    std::vector<double> phases_{0.0};
};

/// Identifies the modulation cell a record was taken at.
struct ModulationPoint {
    int amp_index = 0;
    int phase_index = 0;
    double amp = 0.0;
    double phase = 0.0;

    Displacement displacement() const {
        return Displacement::polar(amp, phase);
    }
    friend bool operator==(const ModulationPoint &, const ModulationPoint &) = default;
};

/// Off counts c_k out of N shots at each efficiency of the grid.
class OnOffDataset {
  public:
    OnOffDataset(EfficiencyGrid grid, std::int64_t shots, std::vector<std::int64_t> off_counts,
                 ModulationPoint point = {})
        : grid_(std::move(grid)), shots_(shots), off_counts_(std::move(off_counts)), point_(point) {
        if (shots_ < 1) {
            throw ValidationError("OnOffDataset: shots must be >= 1");
        }
        if (off_counts_.size() != grid_.size()) {
            throw ValidationError("OnOffDataset: one off count per efficiency required");
        }
        for (auto c : off_counts_) {
            if (c < 0 || c > shots_) {
                throw ValidationError("OnOffDataset: off counts must lie in [0, shots]");
            }
        }
    }

    const EfficiencyGrid &grid() const noexcept {
        return grid_;
    }
    std::int64_t shots() const noexcept {
        return shots_;
    }
    std::span<const std::int64_t> off_counts() const noexcept {
        return off_counts_;
    }
    const ModulationPoint &point() const noexcept {
        return point_;
    }
    std::size_t size() const noexcept {
        return off_counts_.size();
    }
    double frequency(std::size_t k) const {
        return static_cast<double>(off_counts_.at(k)) / static_cast<double>(shots_);
    }
    std::vector<double> frequencies() const {
        std::vector<double> f(off_counts_.size());
        for (std::size_t k = 0; k < f.size(); ++k) {
            f[k] = frequency(k);
        }
        return f;
    }

    friend bool operator==(const OnOffDataset &, const OnOffDataset &) = default;

  private:
    EfficiencyGrid grid_;
    std::int64_t shots_;
    std::vector<std::int64_t> off_counts_;
    ModulationPoint point_;
};

/// P_0(eta) = sum_n (1 - eta)^n p_n.
inline double off_probability(std::span<const double> p, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw ValidationError("off_probability: eta must lie in [0, 1]");
    }
    const double t = 1.0 - eta;
    double acc = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) {
        acc = acc * t + p[i];
    }
    return acc;
}

inline double off_probability(const PhotonDistribution &p, double eta) {
    return off_probability(p.probs(), eta);
}

struct SimulationOptions {
    double tail_tol = kDefaultTailTol;
    /// Extra coordinate folded into the substream keys, e.g. the amplitude index.
    std::uint64_t stream = 0;
    int amp_index = 0;
    unsigned threads = 1;
};

/// Off count drawn at modulation phase l and efficiency k.
inline std::int64_t sample_off_count(std::uint64_t seed, std::uint64_t stream, std::size_t l, std::size_t k,
                                     std::int64_t shots, double p_off) {
    CounterStream rng(derive_key(seed, {stream, static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(k)}));
    return binomial_inversion(shots, std::clamp(p_off, 0.0, 1.0), rng.uniform());
}

/// Exact photon distribution of rho displaced by alpha, on a padded truncation.
inline PhotonDistribution modulated_distribution(const FockDensityMatrix &rho, const Displacement &alpha,
                                                 double tail_tol = kDefaultTailTol) {
    return displaced_photon_distribution(rho, alpha, padded_n_max(rho.n_max(), alpha.magnitude()), tail_tol);
}

/// Shot-noise-limited on/off records, one per modulation phase.
///
/// Each count is Binomial(shots, P_0(eta_k)) with P_0 from the exact
/// displaced distribution; the uniform driving cell (l, k) depends only on
/// (seed, stream, l, k), so results do not depend on the thread count.
inline std::vector<OnOffDataset> simulate_dataset(const FockDensityMatrix &rho, const ModulationSpec &mod,
                                                  const EfficiencyGrid &grid, std::int64_t shots, std::uint64_t seed,
                                                  const SimulationOptions &opt = {}) {
    if (shots < 1) {
        throw ValidationError("simulate_dataset: shots must be >= 1");
    }
    const std::size_t n_phi = mod.n_phases();
    std::vector<std::vector<std::int64_t>> counts(n_phi);
    parallel_for(n_phi, opt.threads, [&](std::size_t l) {
        const PhotonDistribution p = modulated_distribution(rho, mod.displacement(l), opt.tail_tol);
        auto &c = counts[l];
        c.resize(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            c[k] = sample_off_count(seed, opt.stream, l, k, shots, off_probability(p, grid[k]));
        }
    });
    std::vector<OnOffDataset> out;
    out.reserve(n_phi);
    for (std::size_t l = 0; l < n_phi; ++l) {
        ModulationPoint pt{opt.amp_index, static_cast<int>(l), mod.amp(), mod.phases()[l]};
        out.emplace_back(grid, shots, std::move(counts[l]), pt);
    }
    return out;
}

/// Noise-free counterpart: off probabilities of the exact displaced distributions.
inline std::vector<std::vector<double>> exact_off_probabilities(const FockDensityMatrix &rho,
                                                                const ModulationSpec &mod,
                                                                const EfficiencyGrid &grid,
                                                                double tail_tol = kDefaultTailTol) {
    std::vector<std::vector<double>> out(mod.n_phases());
    for (std::size_t l = 0; l < mod.n_phases(); ++l) {
        const PhotonDistribution p = modulated_distribution(rho, mod.displacement(l), tail_tol);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            out[l].push_back(off_probability(p, grid[k]));
        }
    }
    return out;
}

}  // namespace onoff
