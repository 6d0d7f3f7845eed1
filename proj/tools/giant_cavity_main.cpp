#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "giant_cavity/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Simulate and filter a giant-atom cavity with a delayed waveguide loop"};
    std::string config_path;
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trajectories;
    bool quiet = false;
    app.add_option("--config", config_path, "INI experiment file")->required();
    app.add_option("--output-dir", output_dir, "overrides output.directory");
    app.add_option("--seed", seed, "overrides sim.seed");
    app.add_option("--trajectories", trajectories, "overrides sim.trajectories");
    app.add_flag("--quiet", quiet, "no progress output");
    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = giant_cavity::load_config(config_path);
        if (output_dir) cfg.output.directory = *output_dir;
        if (seed) cfg.sim.seed = *seed;
        if (trajectories) cfg.sim.trajectories = *trajectories;
        const auto resolved = giant_cavity::resolve(cfg);
        giant_cavity::run(resolved, quiet ? nullptr : &std::cout);
    } catch (const giant_cavity::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return EXIT_SUCCESS;
}
