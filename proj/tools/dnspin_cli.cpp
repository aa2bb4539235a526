#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "dnspin/config_io.hpp"

using namespace dnspin;

namespace {

enum Exit { kPass = 0, kTolerance = 1, kUsage = 2, kSolver = 3 };

int run(const ExperimentConfig& cfg, const std::string& out) {
    auto res = run_experiment(cfg);
    auto files = write_outputs(out, cfg, res);
    for (auto& c : res.checks)
        std::cout << (c.pass() ? "PASS " : "FAIL ") << c.name << " " << cfgio::fmt_double(c.value) << (c.upper ? " <= " : " >= ")
                  << cfgio::fmt_double(c.bound) << "\n";
    std::cout << "wrote " << files.size() << " files to " << out << "\n";
    return res.pass() ? kPass : kTolerance;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dirichlet-to-Neumann maps for twisted Dirac Laplacians on slabs"};
    app.set_version_flag("--version", "dnspin 0.1.0");
    std::string config_path, out;
    std::uint64_t seed = 0;
    int threads = -1;
    app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
    app.add_option("--out", out, "output directory (overrides run.out)");
    auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides run.seed)");
    app.add_option("--threads", threads, "worker threads (overrides DNSPIN_THREADS and run.threads)")->check(CLI::NonNegativeNumber);
    app.require_subcommand(0, 1);
    app.fallthrough();
    for (auto& [name, desc] : subcommand_catalog()) app.add_subcommand(name, desc)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kPass : kUsage;
    }

    try {
        ExperimentConfig cfg;
        if (!config_path.empty()) cfg = parse_config_file(config_path, true);
        if (auto subs = app.get_subcommands(); !subs.empty()) cfg.subcommand = subs.front()->get_name();
        if (cfg.subcommand.empty()) {
            std::cerr << "no subcommand given\n" << app.help();
            return kUsage;
        }
        if (*seed_opt) cfg.seed = seed;
        if (!out.empty()) cfg.out = out;
        validate(cfg);
        if (threads >= 0) set_threads(threads);
        else if (!std::getenv("DNSPIN_THREADS") && cfg.threads > 0) set_threads(cfg.threads);
        return run(cfg, cfg.out);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const OrderError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const SolverError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kSolver;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return kSolver;
    }
}
