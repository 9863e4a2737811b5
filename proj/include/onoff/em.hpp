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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "onoff/detector.hpp"
#include "onoff/errors.hpp"
#include "onoff/fock.hpp"

namespace onoff {

/// How the detection matrix A_kn = (1 - eta_k)^n is normalized in the
/// multiplicative update.
enum class EMNormalization {
    /// A_kn / sum_k' A_k'n: the expectation-maximization update for on/off
    /// data. Exact model data is a fixed point.
    per_photon_number,
    /// A_kn / sum_j A_kj, summing over the photon number instead. Kept for
    /// comparison; it does not preserve the generating distribution.
    per_efficiency,
};

struct EMConfig {
    /// Reconstruction truncation; 0 selects default_truncation().
    int n_max = 0;
    double tol = 1e-9;
    int max_iter = 100000;
    EMNormalization normalization = EMNormalization::per_photon_number;
    /// Stop once the Pearson chi^2 of the fitted off probabilities per
    /// efficiency falls to this level; 0 disables the check.
    double discrepancy = 0.0;

    void validate() const {
        if (n_max < 0) {
            throw ValidationError("EMConfig: n_max must be >= 1 (or 0 for automatic)");
        }
        if (!(tol > 0.0)) {
            throw ValidationError("EMConfig: tol must be > 0");
        }
        if (max_iter < 1) {
            throw ValidationError("EMConfig: max_iter must be >= 1");
        }
        if (!(discrepancy >= 0.0) || !std::isfinite(discrepancy)) {
            throw ValidationError("EMConfig: discrepancy must be finite and >= 0");
        }
    }
};

/// Off frequencies f_k at the efficiencies of a grid. Frequencies may be
/// exact model probabilities; `shots` weights the log-likelihood.
struct OffFrequencies {
    EfficiencyGrid grid;
    std::vector<double> freqs;
    double shots = 1.0;

    OffFrequencies(EfficiencyGrid g, std::vector<double> f, double n = 1.0)
        : grid(std::move(g)), freqs(std::move(f)), shots(n) {
        if (freqs.size() != grid.size()) {
            throw ValidationError("OffFrequencies: one frequency per efficiency required");
        }
        for (double x : freqs) {
            if (!(x >= 0.0 && x <= 1.0)) {
                throw ValidationError("OffFrequencies: frequencies must lie in [0, 1]");
            }
        }
        if (!(shots > 0.0)) {
            throw ValidationError("OffFrequencies: shots must be > 0");
        }
    }

    explicit OffFrequencies(const OnOffDataset &d)
        : OffFrequencies(d.grid(), d.frequencies(), static_cast<double>(d.shots())) {
    }
};

struct EMResult {
    PhotonDistribution distribution;
    int iterations = 0;
    double final_ll = 0.0;
    bool converged = false;
    /// Max absolute update on the last step.
    double residual = 0.0;
    /// Sum of the last iterate before renormalization.
    double raw_sum = 1.0;
    /// Steps on which the log-likelihood decreased, and the largest drop.
    int ll_decreases = 0;
    double max_ll_drop = 0.0;
    int n_max = 0;
};

/// Binomial log-likelihood term c ln p0 + (N - c) ln(1 - p0), with
/// vanishing-count terms dropped.
inline double log_likelihood_term(double p0, double off_count, double shots) {
    double ll = 0.0;
    if (off_count > 0.0) {
        ll += off_count * std::log(p0);
    }
    const double on = shots - off_count;
    if (on > 0.0) {
        ll += on * std::log1p(-p0);
    }
    return ll;
}

/// Precomputed detection matrix and normalization for one grid and truncation.
class EMKernel {
  public:
    EMKernel(const EfficiencyGrid &grid, int n_max, EMNormalization norm = EMNormalization::per_photon_number)
        : k_(grid.size()), dim_(static_cast<std::size_t>(n_max) + 1), a_(k_ * dim_), w_(k_ * dim_) {
        if (n_max < 1) {
            throw ValidationError("EMKernel: n_max must be >= 1");
        }
        for (std::size_t k = 0; k < k_; ++k) {
            const double t = 1.0 - grid[k];
            double v = 1.0;
            for (std::size_t n = 0; n < dim_; ++n) {
                a_[k * dim_ + n] = v;
                v *= t;
            }
        }
        if (norm == EMNormalization::per_photon_number) {
            for (std::size_t n = 0; n < dim_; ++n) {
                double s = 0.0;
                for (std::size_t k = 0; k < k_; ++k) {
                    s += a_[k * dim_ + n];
                }
                if (!(s > 0.0)) {
                    throw IllConditionedError("EMKernel: photon number " + std::to_string(n) +
                                              " is undetectable on this grid");
                }
                for (std::size_t k = 0; k < k_; ++k) {
                    w_[k * dim_ + n] = a_[k * dim_ + n] / s;
                }
            }
        } else {
            for (std::size_t k = 0; k < k_; ++k) {
                double s = 0.0;
                for (std::size_t n = 0; n < dim_; ++n) {
                    s += a_[k * dim_ + n];
                }
                for (std::size_t n = 0; n < dim_; ++n) {
                    w_[k * dim_ + n] = a_[k * dim_ + n] / s;
                }
            }
        }
    }

    std::size_t efficiencies() const noexcept {
        return k_;
    }
    std::size_t dim() const noexcept {
        return dim_;
    }

    void off_probabilities(std::span<const double> p, std::span<double> p0) const {
        for (std::size_t k = 0; k < k_; ++k) {
            const double *row = &a_[k * dim_];
            double s = 0.0;
            for (std::size_t n = 0; n < dim_; ++n) {
                s += row[n] * p[n];
            }
            p0[k] = s;
        }
    }

    /// p_out_n = p_n sum_k W_kn f_k / p0_k, returned unnormalized; p0 must
    /// hold the off probabilities of p. Returns the raw sum.
    double update(std::span<const double> p, std::span<const double> p0, std::span<const double> freqs,
                  std::span<double> p_out, std::span<double> ratio) const {
        for (std::size_t k = 0; k < k_; ++k) {
            if (p0[k] < 1e-300) {
                throw IllConditionedError("em_step: off probability at efficiency index " + std::to_string(k) +
                                          " vanished");
            }
            ratio[k] = freqs[k] / p0[k];
        }
        std::fill(p_out.begin(), p_out.end(), 0.0);
        for (std::size_t k = 0; k < k_; ++k) {
            const double *row = &w_[k * dim_];
            const double r = ratio[k];
            for (std::size_t n = 0; n < dim_; ++n) {
                p_out[n] += row[n] * r;
            }
        }
        double sum = 0.0;
        for (std::size_t n = 0; n < dim_; ++n) {
            p_out[n] *= p[n];
            sum += p_out[n];
        }
        return sum;
    }

  private:
    std::size_t k_;
    std::size_t dim_;
    std::vector<double> a_;
    std::vector<double> w_;
};

inline double log_likelihood(std::span<const double> p, const OffFrequencies &data) {
    double ll = 0.0;
    for (std::size_t k = 0; k < data.grid.size(); ++k) {
        const double p0 = off_probability(p, data.grid[k]);
        ll += log_likelihood_term(std::clamp(p0, 0.0, 1.0), data.freqs[k] * data.shots, data.shots);
    }
    return ll;
}

/// Binomial log-likelihood of the off counts under the model P_0(eta_k; p).
inline double log_likelihood(const PhotonDistribution &p, const OnOffDataset &data) {
    p.validate();
    double ll = 0.0;
    const double n = static_cast<double>(data.shots());
    for (std::size_t k = 0; k < data.size(); ++k) {
        const double p0 = std::clamp(off_probability(p, data.grid()[k]), 0.0, 1.0);
        ll += log_likelihood_term(p0, static_cast<double>(data.off_counts()[k]), n);
    }
    return ll;
}

inline double renormalize(std::span<double> p, double sum) {
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        throw IllConditionedError("em_step: iterate lost all probability mass");
    }
    for (double &x : p) {
        x /= sum;
    }
    return sum;
}

/// One multiplicative update followed by renormalization to unit sum.
inline PhotonDistribution em_step(const PhotonDistribution &p, const OffFrequencies &data,
                                  EMNormalization norm = EMNormalization::per_photon_number) {
    const EMKernel kernel(data.grid, p.n_max(), norm);
    std::vector<double> p0(kernel.efficiencies()), ratio(kernel.efficiencies()), out(kernel.dim());
    kernel.off_probabilities(p.probs(), p0);
    const double sum = kernel.update(p.probs(), p0, data.freqs, out, ratio);
    renormalize(out, sum);
    return PhotonDistribution(std::move(out));
}

inline PhotonDistribution em_step(const PhotonDistribution &p, const OnOffDataset &data,
                                  EMNormalization norm = EMNormalization::per_photon_number) {
    return em_step(p, OffFrequencies(data), norm);
}

/// Estimate of the mean photon number from the smallest efficiency:
/// -ln f_1 / eta_1, exact for Poissonian light.
inline double mean_photon_estimate(const OffFrequencies &data) {
    const double floor = 0.5 / data.shots;
    const double f = std::clamp(data.freqs.front(), std::min(floor, 1.0), 1.0);
    return std::max(0.0, -std::log(f) / data.grid[0]);
}

/// ceil(mu + 6 sqrt(mu)) + 5 with mu = mean_photon_estimate().
inline int default_truncation(const OffFrequencies &data) {
    const double mu = mean_photon_estimate(data);
    // the small offset keeps exact integers from rounding up
    return static_cast<int>(std::ceil(mu + 6.0 * std::sqrt(mu) - 1e-9)) + 5;
}

/// Maximum-likelihood photon distribution from off frequencies.
///
/// Iterates the normalized update from the uniform distribution on
/// 0..n_max until the max-norm change drops below tol or max_iter is hit.
/// Data with every f_k = 1 admit only the vacuum and return it directly.
inline EMResult reconstruct_pn(const OffFrequencies &data, const EMConfig &cfg = {}) {
    cfg.validate();
    const int n_max = cfg.n_max > 0 ? cfg.n_max : default_truncation(data);
    if (n_max < 1) {
        throw ValidationError("reconstruct_pn: n_max must be >= 1");
    }
    const auto dim = static_cast<std::size_t>(n_max) + 1;

    EMResult res;
    res.n_max = n_max;
    if (std::all_of(data.freqs.begin(), data.freqs.end(), [](double f) { return f == 1.0; })) {
        std::vector<double> vac(dim, 0.0);
        vac[0] = 1.0;
        res.distribution = PhotonDistribution(std::move(vac));
        res.converged = true;
        res.final_ll = log_likelihood(res.distribution.probs(), data);
        return res;
    }

    const EMKernel kernel(data.grid, n_max, cfg.normalization);
    std::vector<double> p(dim, 1.0 / static_cast<double>(dim));
    std::vector<double> next(dim), p0(kernel.efficiencies()), ratio(kernel.efficiencies());

    const auto ll_of = [&](std::span<const double> off) {
        double ll = 0.0;
        for (std::size_t k = 0; k < off.size(); ++k) {
            ll += log_likelihood_term(std::clamp(off[k], 0.0, 1.0), data.freqs[k] * data.shots, data.shots);
        }
        return ll;
    };

    const auto chi2_of = [&](std::span<const double> off) {
        double chi2 = 0.0;
        for (std::size_t k = 0; k < off.size(); ++k) {
            const double var = std::max(off[k] * (1.0 - off[k]), 1.0 / (data.shots * data.shots));
            const double d = data.freqs[k] - off[k];
            chi2 += data.shots * d * d / var;
        }
        return chi2;
    };

    kernel.off_probabilities(p, p0);
    double ll = ll_of(p0);
    for (int it = 1; it <= cfg.max_iter; ++it) {
        res.raw_sum = kernel.update(p, p0, data.freqs, next, ratio);
        renormalize(next, res.raw_sum);
        double delta = 0.0;
        for (std::size_t n = 0; n < dim; ++n) {
            delta = std::max(delta, std::abs(next[n] - p[n]));
        }
        p.swap(next);
        kernel.off_probabilities(p, p0);
        const double ll_new = ll_of(p0);
        const double drop = ll - ll_new;
        if (drop > 1e-12 * std::max(1.0, std::abs(ll))) {
            ++res.ll_decreases;
            res.max_ll_drop = std::max(res.max_ll_drop, drop);
        }
        ll = ll_new;
        res.iterations = it;
        res.residual = delta;
        if (delta < cfg.tol) {
            res.converged = true;
            break;
        }
        if (cfg.discrepancy > 0.0 && chi2_of(p0) <= cfg.discrepancy * static_cast<double>(p0.size())) {
            res.converged = true;
            break;
        }
    }
    res.final_ll = ll;
    res.distribution = PhotonDistribution(std::move(p));
    return res;
}

inline EMResult reconstruct_pn(const OnOffDataset &data, const EMConfig &cfg = {}) {
    if (data.grid().size() < 2) {
        throw ValidationError("reconstruct_pn: need at least 2 efficiencies");
    }
    return reconstruct_pn(OffFrequencies(data), cfg);
}

}  // namespace onoff
