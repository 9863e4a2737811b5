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
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "onoff/detector.hpp"
#include "onoff/em.hpp"
#include "onoff/errors.hpp"
#include "onoff/fock.hpp"
#include "onoff/io.hpp"
#include "onoff/parallel.hpp"
#include "onoff/reconstruction.hpp"
#include "onoff/uncertainty.hpp"

namespace onoff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

/// Consulted when neither --out nor the config names an output directory.
inline constexpr const char *kOutDirEnv = "ONOFF_OUT_DIR";

inline int exit_code(const std::exception &e) {
    if (dynamic_cast<const ValidationError *>(&e) || dynamic_cast<const TruncationError *>(&e)) {
        return kExitValidation;
    }
    if (dynamic_cast<const NumericalError *>(&e)) {
        return kExitNumerical;
    }
    if (dynamic_cast<const IoError *>(&e)) {
        return kExitIo;
    }
    return 1;
}

inline const char *error_kind(const std::exception &e) {
    if (dynamic_cast<const RankDeficiencyError *>(&e)) {
        return "rank_deficiency";
    }
    if (dynamic_cast<const IllConditionedError *>(&e)) {
        return "ill_conditioned";
    }
    if (dynamic_cast<const NumericalError *>(&e)) {
        return "numerical";
    }
    if (dynamic_cast<const TruncationError *>(&e)) {
        return "truncation";
    }
    if (dynamic_cast<const ValidationError *>(&e)) {
        return "validation";
    }
    if (dynamic_cast<const IoError *>(&e)) {
        return "io";
    }
    return "internal";
}

struct Options {
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    int bootstrap = 0;
    bool exact = false;
    std::optional<std::filesystem::path> out;
    /// reconstruct: dataset file; report: results directory.
    std::optional<std::filesystem::path> input;
};

inline std::filesystem::path output_dir(const Options &opt, const io::RunConfig *cfg) {
    if (opt.out) {
        return *opt.out;
    }
    if (cfg != nullptr && cfg->output_dir) {
        return *cfg->output_dir;
    }
    if (const char *env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') {
        return env;
    }
    return ".";
}

inline io::RunConfig load(const Options &opt) {
    if (!opt.config) {
        throw ValidationError("--config is required");
    }
    io::RunConfig cfg = io::load_config(*opt.config);
    if (opt.seed) {
        cfg.seed = *opt.seed;
    }
    return cfg;
}

inline io::DatasetFile simulate(const io::RunConfig &cfg) {
    const FockDensityMatrix rho = cfg.state.build();
    const EfficiencyGrid grid = cfg.grid();
    io::DatasetFile d;
    d.seed = cfg.seed;
    d.shots = cfg.shots;
    d.state = cfg.state;
    d.truncation = rho.n_max();
    d.amps = cfg.amps;
    const ModulationSpec first = cfg.modulation(0);
    d.phases.assign(first.phases().begin(), first.phases().end());
    d.grid = grid;
    for (std::size_t a = 0; a < cfg.amps.size(); ++a) {
        SimulationOptions so;
        so.stream = a;
        so.amp_index = static_cast<int>(a);
        so.threads = cfg.threads;
        for (auto &r : simulate_dataset(rho, cfg.modulation(a), grid, cfg.shots, cfg.seed, so)) {
            d.records.push_back(std::move(r));
        }
    }
    return d;
}

inline int cmd_simulate(const Options &opt, std::ostream &log) {
    const io::RunConfig cfg = load(opt);
    const auto dir = output_dir(opt, &cfg);
    const io::DatasetFile d = simulate(cfg);
    const auto path = dir / "dataset.json";
    io::write_dataset(path, d);
    log << "simulate: state " << io::to_string(cfg.state.kind) << " (truncation " << d.truncation << ")\n"
        << "  grid: K = " << d.grid->size() << ", eta_max = " << io::format_double(d.grid->max()) << "\n"
        << "  modulation: " << d.amps.size() << " amplitude(s) x " << d.phases.size() << " phase(s)\n"
        << "  shots: " << d.shots << ", seed: " << d.seed << "\n"
        << "  wrote " << path.string() << " (" << d.records.size() << " records)\n";
    return kExitOk;
}

/// Photon distribution at one modulation point, reconstructed or exact.
struct PointResult {
    ModulationPoint point;
    std::optional<EMResult> em;
    std::optional<PhotonDistribution> dist;
};

namespace detail {

inline void fail(io::Json &failures, const std::string &stage, int amp_index, int phase_index,
                 const std::exception &e) {
    failures.push_back(io::Json{{"stage", stage},
                                {"amp_index", amp_index},
                                {"phase_index", phase_index},
                                {"error", error_kind(e)},
                                {"message", e.what()}});
}

inline double parity(const PhotonDistribution &p) {
    double w = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        w += (n % 2 == 0 ? 1.0 : -1.0) * p[n];
    }
    return w;
}

inline std::vector<double> padded(const PhotonDistribution &p, std::size_t size) {
    auto v = p.vector();
    v.resize(std::max(size, v.size()), 0.0);
    return v;
}

inline double stddev(const std::vector<double> &xs) {
    double mean = 0.0;
    for (double x : xs) {
        mean += x;
    }
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) {
        var += (x - mean) * (x - mean);
    }
    return std::sqrt(var / static_cast<double>(xs.size() - 1));
}

inline double complex_stddev(const std::vector<Complex> &xs) {
    Complex mean{0.0, 0.0};
    for (const auto &x : xs) {
        mean += x;
    }
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (const auto &x : xs) {
        var += std::norm(x - mean);
    }
    return std::sqrt(var / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

/// Reconstruction of every target, kept in memory until committed.
struct ReconstructionOutput {
    io::OutputSet files;
    bool failed = false;
};

inline ReconstructionOutput reconstruct(const io::RunConfig &cfg, const Options &opt, std::ostream &log) {
    ReconstructionOutput result{io::OutputSet(output_dir(opt, &cfg)), false};
    io::Json diag;
    io::Json failures = io::Json::array();
    // Flagged conditions that still leave usable results.
    io::Json warnings = io::Json::array();
    diag["mode"] = opt.exact ? "exact" : "data";
    diag["seed"] = cfg.seed;

    std::vector<double> amps;
    std::vector<OnOffDataset> records;
    std::vector<EMConfig> cfgs;
    std::vector<PointResult> points;
    const bool want_dm = cfg.wants(io::Target::dm);

    if (opt.exact) {
        const FockDensityMatrix rho = cfg.state.build();
        amps = cfg.amps;
        std::size_t size = 0;
        for (std::size_t a = 0; a < amps.size(); ++a) {
            const auto mod = cfg.modulation(a);
            for (std::size_t l = 0; l < mod.n_phases(); ++l) {
                PointResult pr;
                pr.point = {static_cast<int>(a), static_cast<int>(l), mod.amp(), mod.phases()[l]};
                pr.dist = modulated_distribution(rho, mod.displacement(l));
                size = std::max(size, pr.dist->size());
                points.push_back(std::move(pr));
            }
        }
        if (want_dm) {
            size = std::max(size, static_cast<std::size_t>(cfg.m_max + cfg.s_max + 1));
        }
        for (auto &pr : points) {
            pr.dist = PhotonDistribution(detail::padded(*pr.dist, size));
        }
        diag["state"] = io::to_json(cfg.state);
    } else {
        std::filesystem::path path = opt.input ? *opt.input : output_dir(opt, &cfg) / "dataset.json";
        const io::DatasetFile data = io::load_dataset(path);
        diag["dataset"] = path.string();
        amps = data.amps;
        records = data.records;
        Pipeline pipe;
        pipe.em = cfg.em;
        pipe.s_max = cfg.s_max;
        pipe.m_max = cfg.m_max;
        pipe.kind = want_dm ? PipelineKind::density_matrix : PipelineKind::pn;
        cfgs.assign(records.size(), cfg.em);
        if (want_dm) {
            for (std::size_t a = 0; a < amps.size(); ++a) {
                std::vector<std::size_t> idx;
                std::vector<OnOffDataset> group;
                for (std::size_t i = 0; i < records.size(); ++i) {
                    if (records[i].point().amp_index == static_cast<int>(a)) {
                        idx.push_back(i);
                        group.push_back(records[i]);
                    }
                }
                const auto pinned = pin_em_configs(group, pipe);
                for (std::size_t g = 0; g < idx.size(); ++g) {
                    cfgs[idx[g]] = pinned[g];
                }
            }
        } else {
            cfgs = pin_em_configs(records, pipe);
        }
        points.resize(records.size());
        std::vector<std::string> errors(records.size());
        std::vector<std::string> kinds(records.size());
        parallel_for(records.size(), cfg.threads, [&](std::size_t i) {
            points[i].point = records[i].point();
            try {
                points[i].em = reconstruct_pn(records[i], cfgs[i]);
                points[i].dist = points[i].em->distribution;
            } catch (const NumericalError &e) {
                errors[i] = e.what();
                kinds[i] = error_kind(e);
            }
        });
        io::Json em = io::Json::array();
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto &pt = points[i].point;
            if (!points[i].em) {
                failures.push_back(io::Json{{"stage", "em"},
                                            {"amp_index", pt.amp_index},
                                            {"phase_index", pt.phase_index},
                                            {"error", kinds[i]},
                                            {"message", errors[i]}});
                continue;
            }
            const EMResult &r = *points[i].em;
            em.push_back(io::Json{{"amp_index", pt.amp_index},
                                  {"phase_index", pt.phase_index},
                                  {"n_max", r.n_max},
                                  {"iterations", r.iterations},
                                  {"converged", r.converged},
                                  {"residual", r.residual},
                                  {"log_likelihood", r.final_ll},
                                  {"ll_decreases", r.ll_decreases}});
            if (!r.converged) {
                warnings.push_back(io::Json{{"stage", "em"},
                                            {"amp_index", pt.amp_index},
                                            {"phase_index", pt.phase_index},
                                            {"error", "non_convergence"},
                                            {"message", "EM stopped at max_iter = " + std::to_string(r.iterations) +
                                                            " with residual " + io::format_double(r.residual)}});
            }
        }
        diag["em"] = em;
    }

    // Bootstrap replicas share one pin of the EM truncations with the point estimate.
    std::optional<BootstrapResult> boot;
    std::vector<std::size_t> offset(points.size(), 0);
    if (opt.bootstrap > 0 && !opt.exact) {
        Pipeline pipe;
        pipe.kind = PipelineKind::pn;
        pipe.em = cfg.em;
        try {
            boot = bootstrap(records, pipe, cfgs, opt.bootstrap, cfg.seed, cfg.threads);
            std::size_t q = 0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                offset[i] = q;
                q += static_cast<std::size_t>(cfgs[i].n_max + 1);
            }
            diag["bootstrap"] = io::Json{{"replicas", boot->replicas}, {"failures", boot->failures}};
        } catch (const NumericalError &e) {
            detail::fail(failures, "bootstrap", -1, -1, e);
        }
    } else if (opt.bootstrap > 0) {
        log << "reconstruct: --bootstrap ignored in exact mode\n";
    }
    auto replica_dist = [&](std::size_t i, std::size_t b) {
        std::vector<double> p(static_cast<std::size_t>(cfgs[i].n_max) + 1);
        for (std::size_t n = 0; n < p.size(); ++n) {
            p[n] = boot->samples[offset[i] + n][b].real();
        }
        return p;
    };
    const bool with_err = boot.has_value();
    const std::size_t n_rep = with_err ? boot->samples.front().size() : 0;

    if (cfg.wants(io::Target::pn)) {
        std::vector<std::string> head{"amp_index", "phase_index", "alpha_re", "alpha_im", "n", "p"};
        if (with_err) {
            head.push_back("stddev");
        }
        io::CsvTable t(head);
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!points[i].dist) {
                continue;
            }
            const auto &pt = points[i].point;
            const Complex a = pt.displacement().amplitude();
            for (std::size_t n = 0; n < points[i].dist->size(); ++n) {
                std::vector<std::string> row{io::cell(pt.amp_index), io::cell(pt.phase_index), io::cell(a.real()),
                                             io::cell(a.imag()), io::cell(static_cast<int>(n)),
                                             io::cell((*points[i].dist)[n])};
                if (with_err) {
                    std::vector<double> xs;
                    for (const auto &s : boot->samples[offset[i] + n]) {
                        xs.push_back(s.real());
                    }
                    row.push_back(io::cell(detail::stddev(xs)));
                }
                t.add(row);
            }
        }
        result.files.put("pn.csv", t.str());
    }

    if (cfg.wants(io::Target::wigner)) {
        std::vector<std::string> head{"amp_index", "phase_index", "alpha_re", "alpha_im", "r", "w", "flagged"};
        if (with_err) {
            head.push_back("stddev");
        }
        io::CsvTable t(head);
        const double scale = cfg.conventional_wigner ? 2.0 / std::numbers::pi : 1.0;
        const double sign = cfg.conventional_wigner ? -1.0 : 1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!points[i].dist) {
                continue;
            }
            const auto &pt = points[i].point;
            const Complex a = sign * pt.displacement().amplitude();
            const auto &p = *points[i].dist;
            const bool flagged = !opt.exact && p[p.size() - 1] >= kParityTailTol;
            std::vector<std::string> row{io::cell(pt.amp_index), io::cell(pt.phase_index), io::cell(a.real()),
                                         io::cell(a.imag()), io::cell(pt.amp), io::cell(scale * detail::parity(p)),
                                         io::cell(flagged)};
            if (with_err) {
                std::vector<double> xs;
                for (std::size_t b = 0; b < n_rep; ++b) {
                    xs.push_back(scale * detail::parity(PhotonDistribution(replica_dist(i, b))));
                }
                row.push_back(io::cell(detail::stddev(xs)));
            }
            t.add(row);
        }
        result.files.put("wigner.csv", t.str());
        diag["wigner"] = io::Json{{"convention", cfg.conventional_wigner ? "conventional" : "parity"}};
    }

    if (want_dm) {
        std::vector<std::string> head{"amp_index", "n", "m", "s", "re", "im"};
        if (with_err) {
            head.push_back("stddev");
        }
        io::CsvTable t(head);
        io::Json dm_diag = io::Json::array();
        const DensityMatrixOptions dmo{cfg.svd_cutoff, cfg.residual_bound};
        for (std::size_t a = 0; a < amps.size(); ++a) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (points[i].point.amp_index == static_cast<int>(a)) {
                    idx.push_back(i);
                }
            }
            std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
                return points[x].point.phase_index < points[y].point.phase_index;
            });
            std::vector<PhotonDistribution> dists;
            bool complete = true;
            for (std::size_t i : idx) {
                if (points[i].dist) {
                    dists.push_back(*points[i].dist);
                } else {
                    complete = false;
                }
            }
            if (!complete) {
                failures.push_back(io::Json{{"stage", "dm"},
                                            {"amp_index", static_cast<int>(a)},
                                            {"phase_index", -1},
                                            {"error", "missing_input"},
                                            {"message", "a modulation phase failed EM"}});
                continue;
            }
            try {
                const auto res = reconstruct_density_matrix(dists, amps[a], cfg.s_max, cfg.m_max, dmo);
                std::vector<DensityMatrixResult> reps;
                for (std::size_t b = 0; with_err && b < n_rep; ++b) {
                    std::vector<PhotonDistribution> rd;
                    for (std::size_t i : idx) {
                        rd.emplace_back(replica_dist(i, b));
                    }
                    reps.push_back(reconstruct_density_matrix(rd, amps[a], cfg.s_max, cfg.m_max, dmo));
                }
                for (const auto &d : res.diagnostics) {
                    dm_diag.push_back(io::Json{{"amp_index", static_cast<int>(a)},
                                               {"s", d.s},
                                               {"m_max", d.m_max},
                                               {"condition", d.condition},
                                               {"residual", d.residual},
                                               {"reliable", d.reliable}});
                }
                for (int s = 0; s <= cfg.s_max; ++s) {
                    for (int m = 0; m <= cfg.m_max; ++m) {
                        const Complex v = *res.at(m + s, m);
                        std::vector<std::string> row{io::cell(static_cast<int>(a)), io::cell(m + s), io::cell(m),
                                                     io::cell(s), io::cell(v.real()), io::cell(v.imag())};
                        if (with_err) {
                            std::vector<Complex> xs;
                            for (const auto &r : reps) {
                                xs.push_back(*r.at(m + s, m));
                            }
                            row.push_back(io::cell(detail::complex_stddev(xs)));
                        }
                        t.add(row);
                    }
                }
                if (!res.reliable()) {
                    warnings.push_back(io::Json{{"stage", "dm"},
                                                {"amp_index", static_cast<int>(a)},
                                                {"phase_index", -1},
                                                {"error", "unreliable"},
                                                {"message", "inversion residual above dm.residual_bound"}});
                }
            } catch (const NumericalError &e) {
                detail::fail(failures, "dm", static_cast<int>(a), -1, e);
            }
        }
        result.files.put("dm.csv", t.str());
        diag["dm"] = dm_diag;
    }

    result.failed = !failures.empty();
    diag["warnings"] = warnings;
    diag["failures"] = failures;
    diag["status"] = result.failed ? "failed" : "ok";
    result.files.put("diagnostics.json", io::dump(diag));
    return result;
}

inline int cmd_reconstruct(const Options &opt, std::ostream &log) {
    const io::RunConfig cfg = load(opt);
    const ReconstructionOutput out = reconstruct(cfg, opt, log);
    out.files.commit();
    for (const auto &[name, content] : out.files.files()) {
        log << "reconstruct: wrote " << (out.files.dir() / name).string() << "\n";
    }
    const std::size_t n_warn = io::parse_json(out.files.files().at("diagnostics.json"), "diagnostics")["warnings"].size();
    if (n_warn > 0) {
        log << "reconstruct: " << n_warn << " warning(s), e.g. EM stopped at max_iter; see diagnostics.json\n";
    }
    if (out.failed) {
        log << "reconstruct: some stages failed; see diagnostics.json\n";
        return kExitNumerical;
    }
    return kExitOk;
}

namespace detail {

inline std::optional<io::CsvTable> read_table(const std::filesystem::path &path) {
    if (!std::filesystem::exists(path)) {
        return std::nullopt;
    }
    return io::CsvTable::parse(io::read_file(path), path.string());
}

inline double num(const std::vector<std::string> &row, std::size_t col, const std::string &what) {
    return io::parse_double(row.at(col), what);
}

}  // namespace detail

/// Plot-ready tables and a text summary from the files written by reconstruct.
inline io::OutputSet report(const std::filesystem::path &results, const std::filesystem::path &out,
                            const io::RunConfig *cfg, std::ostream &summary) {
    io::OutputSet files(out);
    const auto pn = detail::read_table(results / "pn.csv");
    const auto wigner = detail::read_table(results / "wigner.csv");
    const auto dm = detail::read_table(results / "dm.csv");
    if (!pn && !wigner && !dm) {
        throw IoError("report: no result files in " + results.string());
    }
    std::ostringstream text;
    text << "report: " << results.string() << "\n";
    if (std::filesystem::exists(results / "diagnostics.json")) {
        const auto diag = io::parse_json(io::read_file(results / "diagnostics.json"), "diagnostics.json");
        if (diag.contains("status")) {
            text << "  status: " << diag.at("status").get<std::string>() << "\n";
        }
        for (const char *list : {"warnings", "failures"}) {
            if (!diag.contains(list)) {
                continue;
            }
            for (const auto &f : diag.at(list)) {
                text << "  " << (list[0] == 'w' ? "warning: " : "failure: ") << f.at("stage").get<std::string>() << " amp " << f.at("amp_index").get<int>()
                     << " phase " << f.at("phase_index").get<int>() << ": " << f.at("message").get<std::string>()
                     << "\n";
            }
        }
    }

    if (pn) {
        const auto ca = pn->column("amp_index"), cl = pn->column("phase_index"), cn = pn->column("n"),
                   cp = pn->column("p");
        std::map<std::pair<int, int>, std::pair<double, double>> moments;
        io::CsvTable bars({"amp_index", "phase_index", "n", "p"});
        for (const auto &row : pn->rows()) {
            const int a = std::stoi(row[ca]);
            const int l = std::stoi(row[cl]);
            const double n = detail::num(row, cn, "pn.csv n");
            const double p = detail::num(row, cp, "pn.csv p");
            moments[{a, l}].first += n * p;
            moments[{a, l}].second += p;
            bars.add({row[ca], row[cl], row[cn], row[cp]});
        }
        files.put("pn_bars.csv", bars.str());
        text << "  photon-number distributions: " << moments.size() << "\n";
        for (const auto &[key, m] : moments) {
            text << "    amp " << key.first << " phase " << key.second << ": <n> = " << io::format_double(m.first)
                 << ", sum p = " << io::format_double(m.second) << "\n";
        }
    }

    if (wigner) {
        const auto cr = wigner->column("r"), cw = wigner->column("w"), ca = wigner->column("amp_index"),
                   cl = wigner->column("phase_index"), cre = wigner->column("alpha_re"),
                   cim = wigner->column("alpha_im");
        const bool err = std::find(wigner->header().begin(), wigner->header().end(), "stddev") !=
                         wigner->header().end();
        std::vector<std::vector<std::string>> rows = wigner->rows();
        std::stable_sort(rows.begin(), rows.end(), [&](const auto &x, const auto &y) {
            const double rx = detail::num(x, cr, "wigner.csv r"), ry = detail::num(y, cr, "wigner.csv r");
            if (rx != ry) {
                return rx < ry;
            }
            return std::stoi(x[cl]) < std::stoi(y[cl]);
        });
        std::vector<std::string> head{"r", "phase", "w"};
        if (err) {
            head.push_back("stddev");
        }
        head.push_back("amp_index");
        head.push_back("phase_index");
        io::CsvTable radial(head);
        double w_min = 0.0, w_max = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto &row = rows[i];
            const double w = detail::num(row, cw, "wigner.csv w");
            w_min = i == 0 ? w : std::min(w_min, w);
            w_max = i == 0 ? w : std::max(w_max, w);
            const double phase = std::atan2(detail::num(row, cim, "wigner.csv alpha_im"),
                                            detail::num(row, cre, "wigner.csv alpha_re"));
            std::vector<std::string> out_row{row[cr], io::cell(phase), row[cw]};
            if (err) {
                out_row.push_back(row[wigner->column("stddev")]);
            }
            out_row.push_back(row[ca]);
            out_row.push_back(row[cl]);
            radial.add(out_row);
        }
        files.put("wigner_radial.csv", radial.str());
        text << "  Wigner points: " << rows.size() << ", range [" << io::format_double(w_min) << ", "
             << io::format_double(w_max) << "]\n";
    }

    if (dm) {
        const auto ca = dm->column("amp_index"), cn = dm->column("n"), cm = dm->column("m"), cre = dm->column("re"),
                   cim = dm->column("im");
        io::CsvTable bars({"amp_index", "n", "m", "re", "im", "abs"});
        std::map<int, std::vector<std::tuple<int, int, Complex>>> groups;
        for (const auto &row : dm->rows()) {
            const Complex v(detail::num(row, cre, "dm.csv re"), detail::num(row, cim, "dm.csv im"));
            const int a = std::stoi(row[ca]), n = std::stoi(row[cn]), m = std::stoi(row[cm]);
            groups[a].emplace_back(n, m, v);
            bars.add({row[ca], row[cn], row[cm], io::cell(v.real()), io::cell(v.imag()), io::cell(std::abs(v))});
            if (n != m) {
                bars.add({row[ca], row[cm], row[cn], io::cell(v.real()), io::cell(-v.imag()), io::cell(std::abs(v))});
            }
        }
        files.put("dm_bars.csv", bars.str());
        text << "  density-matrix elements: " << dm->rows().size() << " (lower triangle)\n";
        if (cfg != nullptr) {
            const FockDensityMatrix theory = cfg->state.build();
            for (const auto &[a, elems] : groups) {
                io::CsvTable delta({"n", "m", "delta"});
                double worst = 0.0;
                std::vector<std::tuple<int, int, double>> cells;
                for (const auto &[n, m, v] : elems) {
                    const Complex th = n < theory.dim() && m < theory.dim() ? theory(n, m) : Complex(0.0, 0.0);
                    const double d = std::abs(v - th);
                    worst = std::max(worst, d);
                    cells.emplace_back(n, m, d);
                    if (n != m) {
                        cells.emplace_back(m, n, d);
                    }
                }
                std::sort(cells.begin(), cells.end());
                for (const auto &[n, m, d] : cells) {
                    delta.add({io::cell(n), io::cell(m), io::cell(d)});
                }
                const std::string name = groups.size() == 1 ? "delta.csv" : "delta_amp" + std::to_string(a) + ".csv";
                files.put(name, delta.str());
                text << "    amp " << a << ": max delta against " << io::to_string(cfg->state.kind) << " = "
                     << io::format_double(worst) << "\n";
            }
        }
    }
    files.put("report.txt", text.str());
    summary << text.str();
    return files;
}

inline int cmd_report(const Options &opt, std::ostream &log) {
    std::optional<io::RunConfig> cfg;
    if (opt.config) {
        cfg = load(opt);
    }
    const auto results = opt.input ? *opt.input : output_dir(opt, cfg ? &*cfg : nullptr);
    const auto out = opt.out ? *opt.out : results;
    const auto files = report(results, out, cfg ? &*cfg : nullptr, log);
    files.commit();
    return kExitOk;
}

/// Noiseless round trips through every stage; one line per check.
inline int cmd_selftest(std::ostream &log) {
    int failed = 0;
    auto check = [&](const std::string &name, double err, double tol) {
        const bool ok = err <= tol;
        failed += ok ? 0 : 1;
        log << (ok ? "PASS " : "FAIL ") << name << ": error " << io::format_double(err) << " (tol "
            << io::format_double(tol) << ")\n";
    };
    {
        const double z = 1.8;
        const auto rho = make_coherent(Complex(z, 0.0), 45, 1e-12);
        const auto mod = ModulationSpec::uniform(0.1, 12);
        std::vector<PhotonDistribution> dists;
        for (std::size_t l = 0; l < mod.n_phases(); ++l) {
            auto p = modulated_distribution(rho, mod.displacement(l), 1e-9).vector();
            p.resize(46);
            dists.emplace_back(p);
        }
        const auto res = reconstruct_density_matrix(dists, 0.1, 1, 44);
        double err = 0.0;
        for (int m = 0; m <= 7; ++m) {
            err = std::max(err, std::abs(*res.at(m, m) - rho(m, m)));
            err = std::max(err, std::abs(*res.at(m + 1, m) - rho(m + 1, m)));
        }
        check("coherent density-matrix round trip", err, 1e-6);
    }
    {
        double err = 0.0;
        const auto vac = make_fock(0, 0);
        const auto th = make_thermal(2.4, 150, 1e-12);
        for (int i = 0; i <= 35; ++i) {
            const double r = 0.1 * i;
            const std::vector<Complex> g{Complex(r, 0.0)};
            err = std::max(err, std::abs(wigner_map(vac, g).points[0].value - std::exp(-2.0 * r * r)));
            err = std::max(err, std::abs(wigner_map(th, g).points[0].value - std::exp(-2.0 * r * r / 5.8) / 5.8));
        }
        check("Wigner closed forms", err, 1e-6);
    }
    {
        const auto grid = EfficiencyGrid::uniform(kDefaultGridSize, kDensityMatrixEtaMax);
        const auto truth = poisson_probs(1.0, 20);
        std::vector<double> f;
        for (double eta : grid.etas()) {
            f.push_back(off_probability(truth, eta));
        }
        const OffFrequencies data(grid, f, 30000.0);
        const PhotonDistribution next = em_step(PhotonDistribution(truth), data);
        double err = 0.0;
        for (std::size_t n = 0; n < truth.size(); ++n) {
            err = std::max(err, std::abs(next[n] - truth[n] / std::accumulate(truth.begin(), truth.end(), 0.0)));
        }
        check("EM fixed point on exact data", err, 1e-12);
    }
    {
        const auto grid = EfficiencyGrid::uniform(kDefaultGridSize, kWignerEtaMax);
        const auto rho = make_thermal(1.0, 60);
        const auto mod = ModulationSpec::uniform(0.5, 3);
        SimulationOptions one, many;
        many.threads = 3;
        const auto a = simulate_dataset(rho, mod, grid, 30000, 42, one);
        const auto b = simulate_dataset(rho, mod, grid, 30000, 42, many);
        check("simulation determinism across threads", a == b ? 0.0 : 1.0, 0.0);
    }
    log << (failed == 0 ? "selftest: all checks passed\n" : "selftest: " + std::to_string(failed) + " check(s) failed\n");
    return failed == 0 ? kExitOk : kExitNumerical;
}

}  // namespace onoff::cli
