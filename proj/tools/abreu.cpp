// Command-line front end: abreu <command> --config <path> [--out <dir>] [--grid-h <v>] [--seed <n>]

#include "abreu/io.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Generalized Abreu equation toolkit for toric bundles over 2D Delzant polytopes"};
    app.require_subcommand(1);
    app.footer("Exit codes: 0 ok, 1 internal, 2 usage, 3 config, 4 validation, 5 domain, 6 convexity,\n"
               "7 convergence, 8 LP, 9 continuation stalled, 10 I/O. ABREU_THREADS caps the worker count.");

    std::string config_path;
    std::string out_dir = ".";
    double grid_h = 0.0;
    std::uint64_t seed = 0;

    const char* descriptions[][2] = {
        {"validate", "check the polytope and the bundle admissibility conditions"},
        {"curvature", "write the operator field S_D(u) on the grid (curvature.csv)"},
        {"functional", "evaluate L_A and the Mabuchi functional (functional.json)"},
        {"stability", "compute the PL stability constant (certificate.json)"},
        {"solve", "run the continuity method (trace.jsonl, psi.csv)"},
        {"export-plot", "write grid CSVs for plotting"},
    };
    std::vector<CLI::App*> subs;
    std::vector<CLI::Option*> h_opts;
    std::vector<CLI::Option*> seed_opts;
    for (const auto& d : descriptions) {
        CLI::App* sub = app.add_subcommand(d[0], d[1]);
        sub->add_option("--config", config_path, "problem configuration file")->required();
        sub->add_option("--out", out_dir, "output directory (created if missing)");
        h_opts.push_back(sub->add_option("--grid-h", grid_h, "override the grid spacing h")->check(CLI::PositiveNumber));
        seed_opts.push_back(sub->add_option("--seed", seed, "seed for the randomized Jacobian self-check (solve)"));
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? abreu::exit_code::ok : abreu::exit_code::usage;
    }

    std::size_t which = 0;
    while (which < subs.size() && !subs[which]->parsed()) ++which;
    const auto command = abreu::parse_command(subs[which]->get_name());

    abreu::ProblemConfig config;
    try {
        config = abreu::load_config(config_path);
        if (h_opts[which]->count() > 0) {
            config.grid.h = grid_h;
            config.solver.h = grid_h;
        }
    } catch (const std::exception& e) {
        std::cerr << "abreu: io: " << e.what() << "\n";
        return abreu::exit_code_for(e);
    }

    abreu::RunOptions options;
    options.out_dir = out_dir;
    if (seed_opts[which]->count() > 0) options.seed = seed;
    return abreu::run_command(config, *command, options, std::cout, std::cerr);
}
