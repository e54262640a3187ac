// voltube: experiment driver for certified lower bounds and Monte Carlo checks
// in square-root local-stochastic-volatility models.
//
// Exit codes: 0 success, 2 config error, 3 hypothesis violation, 4 numerical
// failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "voltube/report.hpp"
#include "voltube/vtb1.hpp"

int main(int argc, char** argv) {
    CLI::App app{"voltube: tube/tail/small-ball bounds and Monte Carlo verification for "
                 "square-root LSV models"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::string out_dir;
    unsigned threads = 0;
    bool allow_unverified = false;
    std::string save_paths;

    app.add_option("--config", config_path, "JSON experiment config path")->required();
    auto* seed_opt = app.add_option("--seed", seed, "override run.seed");
    auto* paths_opt = app.add_option("--paths", n_paths, "override run.n_paths");
    auto* steps_opt = app.add_option("--steps", n_steps, "override run.n_steps");
    auto* out_opt = app.add_option("--out", out_dir, "override output.directory");
    auto* threads_opt = app.add_option("--threads", threads, "simulation worker count");
    app.add_flag("--allow-unverified", allow_unverified,
                 "proceed despite hypothesis violations (recorded in output metadata)");
    auto* save_opt = app.add_option("--save-paths", save_paths,
                                    "also persist the full path batch as a VTB1 binary file");

    static const char* kSubcommands[] = {"constants", "curves", "variational", "tube",
                                         "tails",     "smallballs", "wings",   "moments",
                                         "scaling",   "density"};
    // fallthrough: options may follow the subcommand name (voltube tube --config ...).
    for (const char* name : kSubcommands) app.add_subcommand(name, "")->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        voltube::ExperimentConfig cfg = voltube::load_config(config_path);
        if (seed_opt->count()) cfg.run.seed = seed;
        if (paths_opt->count()) cfg.run.n_paths = n_paths;
        if (steps_opt->count()) cfg.run.n_steps = n_steps;
        if (out_opt->count()) cfg.output.directory = out_dir;
        if (threads_opt->count()) cfg.run.threads = threads;
        voltube::verify_config(cfg, allow_unverified);
        if (save_opt->count()) {
            const voltube::PathBatch batch = voltube::simulate(
                cfg.spec, cfg.run.n_paths, cfg.effective_steps(), cfg.run.seed, cfg.run.scheme);
            voltube::write_vtb1(save_paths, batch);
        }
        const std::string sub = app.get_subcommands().front()->get_name();
        const voltube::json summary = voltube::run_subcommand(sub, cfg);
        std::cout << summary.dump(2) << "\n";
        return 0;
    } catch (const voltube::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const voltube::hypothesis_error& e) {
        std::cerr << "hypothesis violation: " << e.what() << "\n";
        return 3;
    } catch (const voltube::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    }
}
