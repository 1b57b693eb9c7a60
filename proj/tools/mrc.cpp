#include <iostream>

#include <CLI11.hpp>

#include "mrc/app.hpp"

int main(int argc, char** argv)
{
    CLI::App cli{"Exterior Laplace solver by adaptive exterior-harmonic least squares"};
    cli.require_subcommand(1);

    std::string config;
    std::string out = ".";
    int jobs = 1;
    bool verbose = false;

    auto* solve = cli.add_subcommand("solve", "Run one config and write its report files");
    solve->add_option("config", config, "Run config (JSON)")->required();
    solve->add_option("--out", out, "Output directory");
    solve->add_option("--jobs", jobs, "Accepted for symmetry with sweep; a single solve is sequential")
        ->check(CLI::PositiveNumber);
    solve->add_flag("--verbose", verbose, "Print the per-degree history to stderr");

    auto* sweep = cli.add_subcommand("sweep", "Run every cell of a config's grid block");
    sweep->add_option("config", config, "Sweep config (JSON with a grid block)")->required();
    sweep->add_option("--out", out, "Output directory");
    sweep->add_option("--jobs", jobs, "Cells run concurrently")->check(CLI::PositiveNumber);

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = cli.exit(e);
        return code == 0 ? 0 : mrc::app::exit_config;
    }

    if (solve->parsed())
        return mrc::app::solve_command(config, out, verbose, std::cerr);
    return mrc::app::sweep_command(config, out, jobs, std::cerr);
}
