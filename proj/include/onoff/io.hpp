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
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <span>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "json.hpp"

#include "onoff/detector.hpp"
#include "onoff/em.hpp"
#include "onoff/errors.hpp"
#include "onoff/fock.hpp"
#include "onoff/reconstruction.hpp"

namespace onoff::io {

using Json = nlohmann::ordered_json;

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double x) {
    if (!std::isfinite(x)) {
        throw ValidationError("format_double: non-finite value");
    }
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::string &what) {
    double x = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(x)) {
        throw ValidationError(what + ": not a finite decimal: '" + std::string(s) + "'");
    }
    return x;
}

inline std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("read failed: " + path.string());
    }
    return ss.str();
}

/// Writes through a temporary in the target directory and renames over
/// the destination, so readers never see a partial file.
inline void atomic_write(const std::filesystem::path &path, const std::string &content) {
    std::error_code ec;
    const auto dir = path.parent_path();
    if (!dir.empty()) {
        std::filesystem::create_directories(dir, ec);
        if (ec) {
            throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
        }
    }
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + tmp.string());
        }
        out << content;
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp, ec);
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename onto " + path.string());
    }
}

inline Json parse_json(const std::string &text, const std::string &what) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        throw ValidationError(what + ": malformed JSON: " + e.what());
    }
}

namespace detail {

inline void check_keys(const Json &obj, std::initializer_list<std::string_view> allowed, const std::string &where) {
    if (!obj.is_object()) {
        throw ValidationError(where + ": expected an object");
    }
    for (const auto &[key, value] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) {
            ok = ok || key == a;
        }
        if (!ok) {
            throw ValidationError(where + ": unknown field '" + key + "'");
        }
    }
}

inline const Json &require(const Json &obj, const char *key, const std::string &where) {
    if (!obj.contains(key)) {
        throw ValidationError(where + ": missing field '" + key + "'");
    }
    return obj.at(key);
}

inline double number(const Json &v, const std::string &where) {
    if (!v.is_number()) {
        throw ValidationError(where + ": expected a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
        throw ValidationError(where + ": expected a finite number");
    }
    return x;
}

inline std::int64_t integer(const Json &v, const std::string &where) {
    if (!v.is_number_integer()) {
        throw ValidationError(where + ": expected an integer");
    }
    return v.get<std::int64_t>();
}

inline std::uint64_t unsigned_integer(const Json &v, const std::string &where) {
    if (v.is_number_unsigned()) {
        return v.get<std::uint64_t>();
    }
    const auto x = integer(v, where);
    if (x < 0) {
        throw ValidationError(where + ": must be >= 0");
    }
    return static_cast<std::uint64_t>(x);
}

inline double decimal(const Json &v, const std::string &where) {
    if (!v.is_string()) {
        throw ValidationError(where + ": expected a decimal string");
    }
    return parse_double(v.get<std::string>(), where);
}

inline Json decimals(std::span<const double> xs) {
    Json a = Json::array();
    for (double x : xs) {
        a.push_back(format_double(x));
    }
    return a;
}

inline std::vector<double> parse_decimals(const Json &v, const std::string &where) {
    if (!v.is_array()) {
        throw ValidationError(where + ": expected an array");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(decimal(v[i], where + "[" + std::to_string(i) + "]"));
    }
    return out;
}

}  // namespace detail

/// Preparation being simulated or compared against.
struct StateSpec {
    enum class Kind { vacuum, coherent, thermal, fock, phase_averaged_coherent };
    Kind kind = Kind::vacuum;
    Complex z{0.0, 0.0};
    double n_th = 0.0;
    int n = 0;
    /// Fock truncation; 0 picks one whose tail is below 1e-12.
    int n_max = 0;

    friend bool operator==(const StateSpec &, const StateSpec &) = default;

    int resolved_n_max() const {
        if (n_max > 0) {
            return n_max;
        }
        switch (kind) {
            case Kind::vacuum:
                return 0;
            case Kind::fock:
                return n;
            case Kind::coherent:
            case Kind::phase_averaged_coherent:
                return coherent_truncation(std::norm(z));
            case Kind::thermal: {
                if (n_th == 0.0) {
                    return 0;
                }
                const double r = n_th / (1.0 + n_th);
                return static_cast<int>(std::ceil(std::log(1e-13) / std::log(r)));
            }
        }
        return 0;
    }

    FockDensityMatrix build() const {
        const int d = resolved_n_max();
        switch (kind) {
            case Kind::vacuum:
                return make_fock(0, d);
            case Kind::fock:
                return make_fock(n, d);
            case Kind::coherent:
                return make_coherent(z, d);
            case Kind::phase_averaged_coherent:
                return make_phase_averaged_coherent(std::abs(z), d);
            case Kind::thermal:
                return make_thermal(n_th, d);
        }
        throw ValidationError("StateSpec: unknown kind");
    }
};

inline const char *to_string(StateSpec::Kind k) {
    switch (k) {
        case StateSpec::Kind::vacuum:
            return "vacuum";
        case StateSpec::Kind::coherent:
            return "coherent";
        case StateSpec::Kind::thermal:
            return "thermal";
        case StateSpec::Kind::fock:
            return "fock";
        case StateSpec::Kind::phase_averaged_coherent:
            return "phase_averaged_coherent";
    }
    return "unknown";
}

inline Json to_json(const StateSpec &s) {
    Json j;
    j["kind"] = to_string(s.kind);
    switch (s.kind) {
        case StateSpec::Kind::coherent:
            j["z"] = Json::array({s.z.real(), s.z.imag()});
            break;
        case StateSpec::Kind::phase_averaged_coherent:
            j["z"] = s.z.real();
            break;
        case StateSpec::Kind::thermal:
            j["n_th"] = s.n_th;
            break;
        case StateSpec::Kind::fock:
            j["n"] = s.n;
            break;
        case StateSpec::Kind::vacuum:
            break;
    }
    if (s.n_max > 0) {
        j["n_max"] = s.n_max;
    }
    return j;
}

inline StateSpec parse_state(const Json &j, const std::string &where = "state") {
    detail::check_keys(j, {"kind", "z", "n_th", "n", "n_max"}, where);
    const Json &kind = detail::require(j, "kind", where);
    if (!kind.is_string()) {
        throw ValidationError(where + ".kind: expected a string");
    }
    const std::string k = kind.get<std::string>();
    StateSpec s;
    auto forbid = [&](std::initializer_list<const char *> keys) {
        for (const char *key : keys) {
            if (j.contains(key)) {
                throw ValidationError(where + ": field '" + key + "' does not apply to kind '" + k + "'");
            }
        }
    };
    if (k == "vacuum") {
        s.kind = StateSpec::Kind::vacuum;
        forbid({"z", "n_th", "n"});
    } else if (k == "coherent") {
        s.kind = StateSpec::Kind::coherent;
        forbid({"n_th", "n"});
        const Json &z = detail::require(j, "z", where);
        if (z.is_array()) {
            if (z.size() != 2) {
                throw ValidationError(where + ".z: expected [re, im]");
            }
            s.z = Complex(detail::number(z[0], where + ".z"), detail::number(z[1], where + ".z"));
        } else {
            s.z = Complex(detail::number(z, where + ".z"), 0.0);
        }
    } else if (k == "phase_averaged_coherent") {
        s.kind = StateSpec::Kind::phase_averaged_coherent;
        forbid({"n_th", "n"});
        s.z = Complex(detail::number(detail::require(j, "z", where), where + ".z"), 0.0);
        if (s.z.real() < 0.0) {
            throw ValidationError(where + ".z: must be >= 0");
        }
    } else if (k == "thermal") {
        s.kind = StateSpec::Kind::thermal;
        forbid({"z", "n"});
        s.n_th = detail::number(detail::require(j, "n_th", where), where + ".n_th");
        if (s.n_th < 0.0 || s.n_th > 50.0) {
            throw ValidationError(where + ".n_th: must lie in [0, 50]");
        }
    } else if (k == "fock") {
        s.kind = StateSpec::Kind::fock;
        forbid({"z", "n_th"});
        const auto n = detail::integer(detail::require(j, "n", where), where + ".n");
        if (n < 0 || n > 200) {
            throw ValidationError(where + ".n: must lie in [0, 200]");
        }
        s.n = static_cast<int>(n);
    } else {
        throw ValidationError(where + ".kind: unknown state kind '" + k + "'");
    }
    if (std::norm(s.z) > 400.0) {
        throw ValidationError(where + ".z: |z|^2 must be <= 400");
    }
    if (j.contains("n_max")) {
        const auto n = detail::integer(j.at("n_max"), where + ".n_max");
        if (n < 1 || n > 2000) {
            throw ValidationError(where + ".n_max: must lie in [1, 2000]");
        }
        s.n_max = static_cast<int>(n);
        if (s.kind == StateSpec::Kind::fock && s.n > s.n_max) {
            throw ValidationError(where + ".n_max: must be >= n");
        }
    }
    return s;
}

enum class Target { pn, wigner, dm };

inline const char *to_string(Target t) {
    switch (t) {
        case Target::pn:
            return "pn";
        case Target::wigner:
            return "wigner";
        case Target::dm:
            return "dm";
    }
    return "unknown";
}

/// Everything a run needs. Field names mirror the JSON keys.
struct RunConfig {
    StateSpec state;
    /// Modulation amplitudes |alpha|, each scanned over n_phases uniform phases.
    std::vector<double> amps{0.0};
    int n_phases = 1;
    int grid_count = kDefaultGridSize;
    double eta_max = kWignerEtaMax;
    std::int64_t shots = kDefaultShots;
    std::uint64_t seed = 0;
    EMConfig em;
    std::vector<Target> targets{Target::pn};
    int s_max = 1;
    int m_max = 7;
    double svd_cutoff = kDefaultSvdCutoff;
    double residual_bound = 1e-2;
    /// Report (2/pi) W(-alpha) instead of the parity sum.
    bool conventional_wigner = false;
    unsigned threads = 1;
    std::optional<std::string> output_dir;

    bool wants(Target t) const {
        for (auto x : targets) {
            if (x == t) {
                return true;
            }
        }
        return false;
    }
    EfficiencyGrid grid() const {
        return EfficiencyGrid::uniform(grid_count, eta_max);
    }
    ModulationSpec modulation(std::size_t a) const {
        return ModulationSpec::uniform(amps.at(a), n_phases);
    }
};

inline RunConfig parse_config(const Json &j) {
    using detail::check_keys;
    using detail::integer;
    using detail::number;
    using detail::require;
    check_keys(j, {"state", "modulation", "grid", "shots", "seed", "em", "targets", "dm", "wigner", "threads",
                   "output_dir"},
               "config");
    RunConfig c;
    c.state = parse_state(require(j, "state", "config"));

    const Json &mod = require(j, "modulation", "config");
    check_keys(mod, {"amps", "n_phases"}, "modulation");
    const Json &amps = require(mod, "amps", "modulation");
    if (!amps.is_array() || amps.empty()) {
        throw ValidationError("modulation.amps: expected a non-empty array");
    }
    c.amps.clear();
    for (const auto &a : amps) {
        const double x = number(a, "modulation.amps");
        if (x < 0.0 || x > 20.0) {
            throw ValidationError("modulation.amps: each |alpha| must lie in [0, 20]");
        }
        c.amps.push_back(x);
    }
    for (std::size_t i = 0; i < c.amps.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            if (c.amps[i] == c.amps[k]) {
                throw ValidationError("modulation.amps: amplitudes must be distinct");
            }
        }
    }
    const auto n_phases = integer(require(mod, "n_phases", "modulation"), "modulation.n_phases");
    if (n_phases < 1 || n_phases > 1024) {
        throw ValidationError("modulation.n_phases: must lie in [1, 1024]");
    }
    c.n_phases = static_cast<int>(n_phases);

    const Json &grid = require(j, "grid", "config");
    check_keys(grid, {"count", "eta_max"}, "grid");
    const auto count = integer(require(grid, "count", "grid"), "grid.count");
    if (count < 2 || count > 10000) {
        throw ValidationError("grid.count: must lie in [2, 10000]");
    }
    c.grid_count = static_cast<int>(count);
    c.eta_max = number(require(grid, "eta_max", "grid"), "grid.eta_max");
    if (!(c.eta_max > 0.0 && c.eta_max <= 1.0)) {
        throw ValidationError("grid.eta_max: must lie in (0, 1]");
    }

    if (j.contains("shots")) {
        c.shots = integer(j.at("shots"), "shots");
        if (c.shots < 1 || c.shots > (std::int64_t{1} << 40)) {
            throw ValidationError("shots: must lie in [1, 2^40]");
        }
    }
    if (j.contains("seed")) {
        c.seed = detail::unsigned_integer(j.at("seed"), "seed");
    }
    if (j.contains("em")) {
        const Json &em = j.at("em");
        check_keys(em, {"n_max", "tol", "max_iter", "normalization", "discrepancy"}, "em");
        if (em.contains("n_max")) {
            const auto n = integer(em.at("n_max"), "em.n_max");
            if (n < 0 || n > 2000) {
                throw ValidationError("em.n_max: must lie in [0, 2000]");
            }
            c.em.n_max = static_cast<int>(n);
        }
        if (em.contains("tol")) {
            c.em.tol = number(em.at("tol"), "em.tol");
        }
        if (em.contains("max_iter")) {
            const auto n = integer(em.at("max_iter"), "em.max_iter");
            if (n < 1 || n > 100000000) {
                throw ValidationError("em.max_iter: must lie in [1, 1e8]");
            }
            c.em.max_iter = static_cast<int>(n);
        }
        if (em.contains("discrepancy")) {
            c.em.discrepancy = number(em.at("discrepancy"), "em.discrepancy");
        }
        if (em.contains("normalization")) {
            const Json &v = em.at("normalization");
            const std::string s = v.is_string() ? v.get<std::string>() : "";
            if (s == "per_photon_number") {
                c.em.normalization = EMNormalization::per_photon_number;
            } else if (s == "per_efficiency") {
                c.em.normalization = EMNormalization::per_efficiency;
            } else {
                throw ValidationError("em.normalization: expected 'per_photon_number' or 'per_efficiency'");
            }
        }
        c.em.validate();
    }
    if (j.contains("targets")) {
        const Json &t = j.at("targets");
        if (!t.is_array() || t.empty()) {
            throw ValidationError("targets: expected a non-empty array");
        }
        c.targets.clear();
        for (const auto &x : t) {
            const std::string s = x.is_string() ? x.get<std::string>() : "";
            Target tg;
            if (s == "pn") {
                tg = Target::pn;
            } else if (s == "wigner") {
                tg = Target::wigner;
            } else if (s == "dm") {
                tg = Target::dm;
            } else {
                throw ValidationError("targets: unknown target '" + s + "' (pn | wigner | dm)");
            }
            if (c.wants(tg)) {
                throw ValidationError("targets: duplicate target '" + s + "'");
            }
            c.targets.push_back(tg);
        }
    }
    if (j.contains("dm")) {
        const Json &dm = j.at("dm");
        check_keys(dm, {"s_max", "m_max", "svd_cutoff", "residual_bound"}, "dm");
        if (dm.contains("s_max")) {
            const auto s = integer(dm.at("s_max"), "dm.s_max");
            if (s < 0 || s > 100) {
                throw ValidationError("dm.s_max: must lie in [0, 100]");
            }
            c.s_max = static_cast<int>(s);
        }
        if (dm.contains("m_max")) {
            const auto m = integer(dm.at("m_max"), "dm.m_max");
            if (m < 0 || m > 1000) {
                throw ValidationError("dm.m_max: must lie in [0, 1000]");
            }
            c.m_max = static_cast<int>(m);
        }
        if (dm.contains("svd_cutoff")) {
            c.svd_cutoff = number(dm.at("svd_cutoff"), "dm.svd_cutoff");
            if (!(c.svd_cutoff > 0.0 && c.svd_cutoff < 1.0)) {
                throw ValidationError("dm.svd_cutoff: must lie in (0, 1)");
            }
        }
        if (dm.contains("residual_bound")) {
            c.residual_bound = number(dm.at("residual_bound"), "dm.residual_bound");
            if (!(c.residual_bound > 0.0)) {
                throw ValidationError("dm.residual_bound: must be > 0");
            }
        }
    }
    if (c.wants(Target::dm)) {
        check_uniform_phases(static_cast<std::size_t>(c.n_phases), c.s_max);
        for (double a : c.amps) {
            if (c.s_max > 0 && a == 0.0) {
                throw ValidationError("dm: off-diagonal elements need every modulation amplitude > 0");
            }
        }
        if (c.em.n_max > 0 && c.em.n_max < c.m_max + c.s_max) {
            throw ValidationError("dm: em.n_max must be >= m_max + s_max");
        }
    }
    if (j.contains("wigner")) {
        const Json &w = j.at("wigner");
        check_keys(w, {"convention"}, "wigner");
        if (w.contains("convention")) {
            const std::string s = w.at("convention").is_string() ? w.at("convention").get<std::string>() : "";
            if (s == "parity") {
                c.conventional_wigner = false;
            } else if (s == "conventional") {
                c.conventional_wigner = true;
            } else {
                throw ValidationError("wigner.convention: expected 'parity' or 'conventional'");
            }
        }
    }
    if (j.contains("threads")) {
        const auto t = integer(j.at("threads"), "threads");
        if (t < 0 || t > 1024) {
            throw ValidationError("threads: must lie in [0, 1024]");
        }
        c.threads = static_cast<unsigned>(t);
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) {
            throw ValidationError("output_dir: expected a string");
        }
        c.output_dir = j.at("output_dir").get<std::string>();
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path &path) {
    return parse_config(parse_json(read_file(path), path.string()));
}

/// On/off records of one run, all sharing a grid and a shot count.
struct DatasetFile {
    std::uint64_t seed = 0;
    std::int64_t shots = 0;
    StateSpec state;
    int truncation = 0;
    std::vector<double> amps;
    std::vector<double> phases;
    std::optional<EfficiencyGrid> grid;
    std::vector<OnOffDataset> records;

    friend bool operator==(const DatasetFile &, const DatasetFile &) = default;
};

/// Records behind one amplitude, in phase order.
inline std::vector<OnOffDataset> records_for_amp(const DatasetFile &d, int amp_index) {
    std::vector<OnOffDataset> out;
    for (const auto &r : d.records) {
        if (r.point().amp_index == amp_index) {
            out.push_back(r);
        }
    }
    std::sort(out.begin(), out.end(),
              [](const OnOffDataset &a, const OnOffDataset &b) { return a.point().phase_index < b.point().phase_index; });
    return out;
}

inline Json to_json(const DatasetFile &d) {
    Json j;
    j["meta"] = Json{{"seed", d.seed}, {"shots", d.shots}, {"state", to_json(d.state)}, {"truncation", d.truncation}};
    Json mod;
    if (d.amps.size() == 1) {
        mod["amp"] = format_double(d.amps[0]);
    }
    mod["amps"] = detail::decimals(d.amps);
    mod["phases"] = detail::decimals(d.phases);
    j["modulation"] = mod;
    j["grid"] = Json{{"etas", detail::decimals(d.grid->etas())}};
    Json recs = Json::array();
    for (const auto &r : d.records) {
        Json rec;
        rec["amp_index"] = r.point().amp_index;
        rec["phase_index"] = r.point().phase_index;
        rec["off_counts"] = std::vector<std::int64_t>(r.off_counts().begin(), r.off_counts().end());
        recs.push_back(rec);
    }
    j["records"] = recs;
    return j;
}

inline DatasetFile parse_dataset(const Json &j) {
    using detail::check_keys;
    using detail::require;
    check_keys(j, {"meta", "modulation", "grid", "records"}, "dataset");
    DatasetFile d;
    const Json &meta = require(j, "meta", "dataset");
    check_keys(meta, {"seed", "shots", "state", "truncation"}, "meta");
    d.seed = detail::unsigned_integer(require(meta, "seed", "meta"), "meta.seed");
    d.shots = detail::integer(require(meta, "shots", "meta"), "meta.shots");
    d.state = parse_state(require(meta, "state", "meta"), "meta.state");
    d.truncation = static_cast<int>(detail::integer(require(meta, "truncation", "meta"), "meta.truncation"));

    const Json &mod = require(j, "modulation", "dataset");
    check_keys(mod, {"amp", "amps", "phases"}, "modulation");
    if (mod.contains("amps")) {
        d.amps = detail::parse_decimals(mod.at("amps"), "modulation.amps");
    }
    if (mod.contains("amp")) {
        const double a = detail::decimal(mod.at("amp"), "modulation.amp");
        if (d.amps.empty()) {
            d.amps = {a};
        } else if (d.amps.size() != 1 || d.amps[0] != a) {
            throw ValidationError("modulation: 'amp' disagrees with 'amps'");
        }
    }
    if (d.amps.empty()) {
        throw ValidationError("modulation: need 'amp' or 'amps'");
    }
    d.phases = detail::parse_decimals(require(mod, "phases", "modulation"), "modulation.phases");
    for (double a : d.amps) {
        ModulationSpec(a, d.phases);  // validates
    }

    const Json &grid = require(j, "grid", "dataset");
    check_keys(grid, {"etas"}, "grid");
    d.grid = EfficiencyGrid(detail::parse_decimals(require(grid, "etas", "grid"), "grid.etas"));

    const Json &recs = require(j, "records", "dataset");
    if (!recs.is_array() || recs.empty()) {
        throw ValidationError("records: expected a non-empty array");
    }
    std::set<std::pair<int, int>> seen;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const std::string where = "records[" + std::to_string(i) + "]";
        const Json &r = recs[i];
        check_keys(r, {"amp_index", "phase_index", "off_counts"}, where);
        const auto a = r.contains("amp_index") ? detail::integer(r.at("amp_index"), where + ".amp_index") : 0;
        const auto l = detail::integer(require(r, "phase_index", where), where + ".phase_index");
        if (a < 0 || a >= static_cast<std::int64_t>(d.amps.size())) {
            throw ValidationError(where + ".amp_index: out of range");
        }
        if (l < 0 || l >= static_cast<std::int64_t>(d.phases.size())) {
            throw ValidationError(where + ".phase_index: out of range");
        }
        if (!seen.insert({static_cast<int>(a), static_cast<int>(l)}).second) {
            throw ValidationError(where + ": duplicate modulation point");
        }
        const Json &c = require(r, "off_counts", where);
        if (!c.is_array()) {
            throw ValidationError(where + ".off_counts: expected an array");
        }
        std::vector<std::int64_t> counts;
        for (const auto &x : c) {
            counts.push_back(detail::integer(x, where + ".off_counts"));
        }
        const ModulationPoint pt{static_cast<int>(a), static_cast<int>(l), d.amps[static_cast<std::size_t>(a)],
                                 d.phases[static_cast<std::size_t>(l)]};
        d.records.emplace_back(*d.grid, d.shots, std::move(counts), pt);
    }
    return d;
}

inline std::string dump(const Json &j) {
    return j.dump(2) + "\n";
}

inline void write_dataset(const std::filesystem::path &path, const DatasetFile &d) {
    atomic_write(path, dump(to_json(d)));
}

inline DatasetFile load_dataset(const std::filesystem::path &path) {
    return parse_dataset(parse_json(read_file(path), path.string()));
}

/// Comma-separated table with a header row; cells are written verbatim.
class CsvTable {
  public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
    }

    CsvTable &add(std::vector<std::string> row) {
        if (row.size() != header_.size()) {
            throw ValidationError("CsvTable: row width does not match the header");
        }
        rows_.push_back(std::move(row));
        return *this;
    }

    const std::vector<std::string> &header() const noexcept {
        return header_;
    }
    const std::vector<std::vector<std::string>> &rows() const noexcept {
        return rows_;
    }

    std::string str() const {
        std::string out;
        auto line = [&out](const std::vector<std::string> &cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) {
                    out += ',';
                }
                out += cells[i];
            }
            out += '\n';
        };
        line(header_);
        for (const auto &r : rows_) {
            line(r);
        }
        return out;
    }

    /// Column index by name, or throws.
    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header_.size(); ++i) {
            if (header_[i] == name) {
                return i;
            }
        }
        throw ValidationError("CsvTable: no column '" + std::string(name) + "'");
    }

    static CsvTable parse(const std::string &text, const std::string &what) {
        std::vector<std::vector<std::string>> lines;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            std::vector<std::string> cells;
            std::size_t start = 0;
            for (;;) {
                const auto comma = line.find(',', start);
                cells.push_back(line.substr(start, comma - start));
                if (comma == std::string::npos) {
                    break;
                }
                start = comma + 1;
            }
            lines.push_back(std::move(cells));
        }
        if (lines.empty()) {
            throw ValidationError(what + ": empty CSV");
        }
        CsvTable t(lines.front());
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].size() != t.header_.size()) {
                throw ValidationError(what + ": row " + std::to_string(i) + " has the wrong width");
            }
            t.rows_.push_back(std::move(lines[i]));
        }
        return t;
    }

    friend bool operator==(const CsvTable &, const CsvTable &) = default;

  private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

inline std::string cell(double x) {
    return format_double(x);
}
inline std::string cell(std::int64_t x) {
    return std::to_string(x);
}
inline std::string cell(int x) {
    return std::to_string(x);
}
inline std::string cell(bool x) {
    return x ? "1" : "0";
}

/// Output files collected in memory and committed together at the end.
class OutputSet {
  public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
    }

    void put(const std::string &name, std::string content) {
        files_[name] = std::move(content);
    }
    bool has(const std::string &name) const {
        return files_.count(name) != 0;
    }
    const std::map<std::string, std::string> &files() const noexcept {
        return files_;
    }
    const std::filesystem::path &dir() const noexcept {
        return dir_;
    }

    void commit() const {
        for (const auto &[name, content] : files_) {
            atomic_write(dir_ / name, content);
        }
    }

  private:
    std::filesystem::path dir_;
    std::map<std::string, std::string> files_;
};

}  // namespace onoff::io
