#pragma once

#include "ipsi/inference.hpp"
#include "ipsi/nuisance.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace ipsi::cli {

struct GridSpec {
    double min = 0.2;
    double max = 5.0;
    int points = 50;
    bool log = true;

    DeltaGrid build() const;
};

struct RunConfig {
    std::string command;
    std::filesystem::path input;
    std::filesystem::path truth;
    std::string preset;
    Index n = 2000;
    GridSpec grid;
    int k_folds = 5;
    std::string learner_pi = "boosted-stumps";
    std::string learner_mu = "boosted-stumps";
    double alpha = 0.05;
    int bootstrap_b = 5000;
    std::uint64_t seed = 1;
    std::filesystem::path output;
    int replications = 0;

    // Throws ArgumentError when a field is invalid for the command.
    void validate() const;
};

nlohmann::json curve_to_json(const CurveEstimate& curve);
CurveEstimate curve_from_json(const nlohmann::json& j);

// Paths of the auxiliary files written next to an output path.
std::filesystem::path truth_sidecar_path(const std::filesystem::path& data_path);
std::filesystem::path plot_csv_path(const std::filesystem::path& output_path);

void cmd_simulate(const RunConfig& config, std::ostream& log);
nlohmann::json cmd_estimate(const RunConfig& config, std::ostream& log);
nlohmann::json cmd_test_null(const RunConfig& config, std::ostream& log);
nlohmann::json cmd_compare(const RunConfig& config, std::ostream& log);

// Dispatches on config.command and returns the process exit code:
// 0 success, 2 validation error, 3 runtime or numeric error. Result JSON goes
// to `out` when no output path is set; stage lines and errors go to `err`.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

} // namespace ipsi::cli
