#pragma once

#include "ipsi/data.hpp"
#include "ipsi/longitudinal.hpp"
#include "ipsi/nuisance.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ipsi {

// Generator of X_t given the past (x_1..x_{t-1}, a_1..a_{t-1}). Discrete when
// `support` is non-empty (probabilities over it), otherwise Gaussian with the
// given conditional mean and a common standard deviation.
struct CovariateBlock {
    Index dim = 1;
    std::vector<Vector> support;
    std::function<Vector(int t, const Trajectory& past)> probabilities;
    std::function<Vector(int t, const Trajectory& past)> mean;
    double sd = 1.0;

    bool discrete() const { return !support.empty(); }
};

struct DGPSpec {
    std::string name;
    int periods = 1;
    std::vector<CovariateBlock> covariates;   // one block per period
    std::function<double(int t, CRef<Vector> history)> propensity;
    std::function<double(CRef<Vector> history, int a)> outcome_mean;
    double noise_sd = 1.0;
    // Propensity is exactly 0 or 1 on a set of positive probability.
    bool structural_violation = false;

    std::vector<Index> dims() const;
    bool discrete() const;
    DiscreteDGPModel discrete_model() const;
    void validate() const;
};

std::vector<std::string> preset_names();
// Throws ArgumentError naming the preset when it does not exist.
DGPSpec preset(const std::string& name);

Panel generate_panel(const DGPSpec& dgp, Index n, std::uint64_t seed);
PointData generate_points(const DGPSpec& dgp, Index n, std::uint64_t seed);

enum class OracleMethod { exact, monte_carlo };

struct OracleResult {
    double value = 0.0;
    OracleMethod method = OracleMethod::exact;
    Index draws = 0;
    double se = 0.0;
    bool defined = true;
};

std::string to_string(OracleMethod method);

inline constexpr Index kDefaultOracleDraws = 1'000'000;

// psi(delta) for the DGP: exact enumeration of the g-formula, or simulation of
// the intervened process with A_t ~ Bernoulli(q_t(H_t)).
OracleResult oracle_psi(const DGPSpec& dgp, double delta, OracleMethod method,
                        Index draws = kDefaultOracleDraws, std::uint64_t seed = 0);

// E(Y^{a,...,a}). Reported undefined when the DGP violates positivity.
OracleResult oracle_static_mean(const DGPSpec& dgp, int a, OracleMethod method,
                                Index draws = kDefaultOracleDraws, std::uint64_t seed = 0);

// Pass-through learners that return the true pi_t, mu and m_t.
struct OracleLearners {
    LearnerSpec pi;
    LearnerSpec mu;
};

OracleLearners oracle_nuisances(const DGPSpec& dgp);

// E[var(Y^1|X)/pi + var(Y^0|X)/(1-pi) + (CATE - ATE)^2] for T = 1. Infinite
// when pi hits 0 or 1.
OracleResult efficiency_bound(const DGPSpec& dgp, Index draws = kDefaultOracleDraws, std::uint64_t seed = 0);

// Sample average of (pi - pi_hat)^2 + (pi - pi_hat) * max_a (mu_a - mu_hat_a)
// over the observed covariates.
double bias_bound_diagnostic(const NuisanceFit& nuis, const PointData& data, const DGPSpec& dgp);

} // namespace ipsi
