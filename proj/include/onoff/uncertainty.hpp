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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "onoff/detector.hpp"
#include "onoff/em.hpp"
#include "onoff/errors.hpp"
#include "onoff/fock.hpp"
#include "onoff/parallel.hpp"
#include "onoff/reconstruction.hpp"
#include "onoff/rng.hpp"

namespace onoff {

enum class QuantityKind { pn_entry, wigner_point, dm_element };

inline const char *to_string(QuantityKind k) {
    switch (k) {
        case QuantityKind::pn_entry:
            return "pn_entry";
        case QuantityKind::wigner_point:
            return "wigner_point";
        case QuantityKind::dm_element:
            return "dm_element";
    }
    return "unknown";
}

/// One scalar output of a reconstruction pipeline.
///   pn_entry:     dataset, row = n
///   wigner_point: dataset
///   dm_element:   row = n, col = m of <n|rho|m>
struct Quantity {
    QuantityKind kind = QuantityKind::pn_entry;
    int dataset = -1;
    int row = 0;
    int col = 0;
    Complex alpha{0.0, 0.0};
    Complex value{0.0, 0.0};
};

struct ErrorReport {
    QuantityKind kind = QuantityKind::pn_entry;
    int dataset = -1;
    int row = 0;
    int col = 0;
    Complex alpha{0.0, 0.0};
    Complex mean{0.0, 0.0};
    double stddev = 0.0;
    int replicas = 0;
};

enum class PipelineKind { pn, wigner, density_matrix };

/// Which chain each replica is pushed through, with its settings.
struct Pipeline {
    PipelineKind kind = PipelineKind::wigner;
    EMConfig em;
    int s_max = 2;
    int m_max = 7;
    DensityMatrixOptions dm;
};

/// Resolves automatic truncations against the given data so every replica
/// runs the same estimator. The density-matrix chain needs one truncation
/// for all phases.
inline std::vector<EMConfig> pin_em_configs(std::span<const OnOffDataset> datasets, const Pipeline &pipe) {
    std::vector<EMConfig> cfgs(datasets.size(), pipe.em);
    if (pipe.em.n_max > 0) {
        return cfgs;
    }
    int shared = 0;
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        cfgs[i].n_max = default_truncation(OffFrequencies(datasets[i]));
        shared = std::max(shared, cfgs[i].n_max);
    }
    if (pipe.kind == PipelineKind::density_matrix) {
        shared = std::max(shared, pipe.m_max + pipe.s_max);
        for (auto &c : cfgs) {
            c.n_max = shared;
        }
    }
    return cfgs;
}

/// Runs the chain once. The output order is a function of the pipeline and
/// the dataset layout only.
inline std::vector<Quantity> run_pipeline(std::span<const OnOffDataset> datasets, const Pipeline &pipe,
                                          std::span<const EMConfig> cfgs) {
    if (datasets.empty()) {
        throw ValidationError("run_pipeline: no datasets");
    }
    std::vector<EMResult> ems;
    ems.reserve(datasets.size());
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        ems.push_back(reconstruct_pn(datasets[i], cfgs[i]));
    }
    std::vector<Quantity> out;
    switch (pipe.kind) {
        case PipelineKind::pn:
            for (std::size_t i = 0; i < datasets.size(); ++i) {
                const auto &p = ems[i].distribution;
                for (std::size_t n = 0; n < p.size(); ++n) {
                    out.push_back({QuantityKind::pn_entry, static_cast<int>(i), static_cast<int>(n), 0,
                                   datasets[i].point().displacement().amplitude(), Complex(p[n], 0.0)});
                }
            }
            break;
        case PipelineKind::wigner:
            for (std::size_t i = 0; i < datasets.size(); ++i) {
                out.push_back({QuantityKind::wigner_point, static_cast<int>(i), 0, 0,
                               datasets[i].point().displacement().amplitude(),
                               Complex(parity_wigner_point(ems[i].distribution), 0.0)});
            }
            break;
        case PipelineKind::density_matrix: {
            const double amp = datasets.front().point().amp;
            for (std::size_t i = 0; i < datasets.size(); ++i) {
                const auto &pt = datasets[i].point();
                if (std::abs(pt.amp - amp) > 1e-12 || pt.phase_index != static_cast<int>(i)) {
                    throw ValidationError("run_pipeline: density-matrix chain needs one amplitude with phases in order");
                }
            }
            const auto dists = common_truncation(ems);
            const auto dm = reconstruct_density_matrix(dists, amp, pipe.s_max, pipe.m_max, pipe.dm);
            for (Eigen::Index n = 0; n < dm.elements.rows(); ++n) {
                for (Eigen::Index m = 0; m < dm.elements.cols(); ++m) {
                    if (dm.known(n, m)) {
                        out.push_back({QuantityKind::dm_element, -1, static_cast<int>(n), static_cast<int>(m),
                                       Complex(amp, 0.0), dm.elements(n, m)});
                    }
                }
            }
            break;
        }
    }
    return out;
}

/// Replica of a dataset with every count redrawn from Binomial(N, f_k).
inline OnOffDataset resample(const OnOffDataset &d, std::uint64_t seed, std::uint64_t replica,
                             std::uint64_t dataset_index) {
    std::vector<std::int64_t> counts(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) {
        CounterStream rng(derive_key(seed, {0xb0075ULL, replica, dataset_index, static_cast<std::uint64_t>(k)}));
        counts[k] = binomial_inversion(d.shots(), d.frequency(k), rng.uniform());
    }
    return OnOffDataset(d.grid(), d.shots(), std::move(counts), d.point());
}

struct BootstrapResult {
    std::vector<ErrorReport> reports;
    int replicas = 0;
    int failures = 0;
    /// samples[q][b]: value of quantity q in successful replica b.
    std::vector<std::vector<Complex>> samples;
};

inline constexpr double kMaxReplicaFailureFraction = 0.2;

/// Nonparametric bootstrap of the reconstruction chain.
///
/// Replica b resamples every off count and reruns the pipeline with the
/// given per-dataset EM settings, normally pinned on the original data. Replicas are keyed on
/// (seed, b), so the result is independent of `threads`.
inline BootstrapResult bootstrap(std::span<const OnOffDataset> datasets, const Pipeline &pipe,
                                 std::span<const EMConfig> cfgs, int replicas, std::uint64_t seed,
                                 unsigned threads = 1) {
    if (replicas < 2) {
        throw ValidationError("bootstrap: need at least 2 replicas");
    }
    if (cfgs.size() != datasets.size()) {
        throw ValidationError("bootstrap: one EM configuration per dataset required");
    }
    const auto reference = run_pipeline(datasets, pipe, cfgs);

    std::vector<std::vector<Quantity>> runs(static_cast<std::size_t>(replicas));
    std::vector<char> failed(static_cast<std::size_t>(replicas), 0);
    parallel_for(static_cast<std::size_t>(replicas), threads, [&](std::size_t b) {
        std::vector<OnOffDataset> rep;
        rep.reserve(datasets.size());
        for (std::size_t i = 0; i < datasets.size(); ++i) {
            rep.push_back(resample(datasets[i], seed, b, i));
        }
        try {
            runs[b] = run_pipeline(rep, pipe, cfgs);
            if (runs[b].size() != reference.size()) {
                failed[b] = 1;
            }
        } catch (const NumericalError &) {
            failed[b] = 1;
        }
    });

    BootstrapResult res;
    res.replicas = replicas;
    for (char f : failed) {
        res.failures += f;
    }
    if (res.failures > kMaxReplicaFailureFraction * replicas) {
        throw NumericalError("bootstrap: " + std::to_string(res.failures) + " of " + std::to_string(replicas) +
                             " replicas failed");
    }
    const int ok = replicas - res.failures;
    if (ok < 2) {
        throw NumericalError("bootstrap: fewer than 2 successful replicas");
    }
    res.samples.assign(reference.size(), {});
    for (std::size_t b = 0; b < runs.size(); ++b) {
        if (failed[b]) {
            continue;
        }
        for (std::size_t q = 0; q < reference.size(); ++q) {
            res.samples[q].push_back(runs[b][q].value);
        }
    }
    for (std::size_t q = 0; q < reference.size(); ++q) {
        const auto &xs = res.samples[q];
        Complex mean{0.0, 0.0};
        for (const auto &x : xs) {
            mean += x;
        }
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (const auto &x : xs) {
            var += std::norm(x - mean);
        }
        var /= static_cast<double>(xs.size() - 1);
        const auto &r = reference[q];
        res.reports.push_back({r.kind, r.dataset, r.row, r.col, r.alpha, mean, std::sqrt(var), ok});
    }
    return res;
}

/// As above with the truncations pinned by pin_em_configs().
inline BootstrapResult bootstrap(std::span<const OnOffDataset> datasets, const Pipeline &pipe, int replicas,
                                 std::uint64_t seed, unsigned threads = 1) {
    const auto cfgs = pin_em_configs(datasets, pipe);
    return bootstrap(datasets, pipe, cfgs, replicas, seed, threads);
}

/// Delta_nm = |rho_exp(n, m) - rho_th(n, m)| over the reconstructed index set.
struct DeltaMap {
    RealMatrix entries;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> known;

    /// Largest entry with n, m <= limit (all entries for limit < 0).
    double max(int limit = -1) const {
        double best = 0.0;
        for (Eigen::Index n = 0; n < entries.rows(); ++n) {
            for (Eigen::Index m = 0; m < entries.cols(); ++m) {
                if (known(n, m) && (limit < 0 || (n <= limit && m <= limit))) {
                    best = std::max(best, entries(n, m));
                }
            }
        }
        return best;
    }
};

inline DeltaMap delta_map(const DensityMatrixResult &exp, const FockDensityMatrix &theory) {
    DeltaMap d;
    const Eigen::Index dim = exp.elements.rows();
    d.entries = RealMatrix::Zero(dim, dim);
    d.known = exp.known;
    for (Eigen::Index n = 0; n < dim; ++n) {
        for (Eigen::Index m = 0; m < dim; ++m) {
            if (!exp.known(n, m)) {
                continue;
            }
            const bool inside = n < theory.dim() && m < theory.dim();
            const Complex th = inside ? theory.matrix()(n, m) : Complex(0.0, 0.0);
            d.entries(n, m) = std::abs(exp.elements(n, m) - th);
        }
    }
    return d;
}

}  // namespace onoff
