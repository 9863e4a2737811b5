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


#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "onoff/cli.hpp"

int main(int argc, char **argv) {
    using namespace onoff::cli;
    CLI::App app{"Simulate and reconstruct on/off photodetection of modulated optical states"};
    app.require_subcommand(1);

    Options opt;
    std::string config, out, input;
    std::uint64_t seed = 0;

    auto common = [&](CLI::App *cmd) {
        cmd->add_option("--config", config, "Run configuration (JSON)")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "Override the configured seed");
        cmd->add_option("--out", out, std::string("Output directory (default: config, then $") + kOutDirEnv + ", then .)");
    };

    auto *sim = app.add_subcommand("simulate", "Draw on/off counts for the configured state");
    common(sim);
    auto *rec = app.add_subcommand("reconstruct", "Photon statistics, Wigner map and density matrix from a dataset");
    common(rec);
    rec->add_option("dataset", input, "Dataset file (default: <out>/dataset.json)");
    rec->add_option("--bootstrap", opt.bootstrap, "Bootstrap replicas for error columns")->check(CLI::Range(2, 100000));
    rec->add_flag("--exact", opt.exact, "Use the analytic distributions of the configured state");
    auto *rep = app.add_subcommand("report", "Summary and plot-ready tables from reconstruct output");
    common(rep);
    rep->add_option("results", input, "Directory holding reconstruct output (default: the output directory)");
    auto *self = app.add_subcommand("selftest", "Run the noiseless round-trip checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }
    if (!config.empty()) {
        opt.config = config;
    }
    if (!out.empty()) {
        opt.out = out;
    }
    if (!input.empty()) {
        opt.input = input;
    }
    for (auto *cmd : {sim, rec, rep}) {
        if (cmd->parsed() && cmd->count("--seed") > 0) {
            opt.seed = seed;
        }
    }

    try {
        if (sim->parsed()) {
            return cmd_simulate(opt, std::cout);
        }
        if (rec->parsed()) {
            return cmd_reconstruct(opt, std::cout);
        }
        if (rep->parsed()) {
            return cmd_report(opt, std::cout);
        }
        if (self->parsed()) {
            return cmd_selftest(std::cout);
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    }
    return kExitValidation;
}
