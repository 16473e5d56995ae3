#include "ipsi/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    ipsi::cli::RunConfig config;
    CLI::App app{"Incremental propensity score intervention effects"};
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--grid-min", config.grid.min, "Smallest delta");
        cmd->add_option("--grid-max", config.grid.max, "Largest delta");
        cmd->add_option("--grid-points", config.grid.points, "Number of grid points");
        cmd->add_option("--grid-log", config.grid.log, "Log spacing (true) or linear (false)");
        cmd->add_option("--seed", config.seed, "Random seed");
        cmd->add_option("--output", config.output, "Output path");
        cmd->add_option("--preset", config.preset, "Simulation preset name");
    };
    auto add_estimation = [&](CLI::App* cmd) {
        add_common(cmd);
        cmd->add_option("--input", config.input, "Data CSV");
        cmd->add_option("--k-folds", config.k_folds, "Cross-fitting folds");
        cmd->add_option("--learner-pi", config.learner_pi, "Propensity learner, e.g. boosted-stumps:rounds=200");
        cmd->add_option("--learner-mu", config.learner_mu, "Outcome learner");
        cmd->add_option("--alpha", config.alpha, "Significance level");
        cmd->add_option("--bootstrap-b", config.bootstrap_b, "Multiplier bootstrap replications");
    };

    auto* simulate = app.add_subcommand("simulate", "Generate data from a preset with a truth sidecar");
    add_common(simulate);
    simulate->add_option("--n", config.n, "Number of subjects");

    auto* estimate = app.add_subcommand("estimate", "Estimate the incremental effect curve");
    add_estimation(estimate);

    auto* null_test = app.add_subcommand("test-null", "Test for no incremental effect");
    add_estimation(null_test);

    auto* compare = app.add_subcommand("compare", "Compare against IPW, MSM and ATE baselines");
    add_estimation(compare);
    compare->add_option("--truth", config.truth, "Truth sidecar (default: <input>.truth.json)");
    compare->add_option("--n", config.n, "Subjects per replication");
    compare->add_option("--replications", config.replications, "Simulated replications from --preset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    config.command = app.get_subcommands().front()->get_name();
    return ipsi::cli::run(config, std::cout, std::cerr);
}
