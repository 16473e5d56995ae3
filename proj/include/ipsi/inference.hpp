#pragma once

#include "ipsi/intervention.hpp"
#include "ipsi/single.hpp"

#include <cstdint>
#include <vector>

namespace ipsi {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

enum class Multiplier { rademacher, gaussian };

// Per-column sample standard deviation (divisor n - 1).
Vector variance_estimate(const IFMatrix& influence);

Interval pointwise_ci(double psi_hat, double sigma_hat, Index n, double alpha);

struct BootstrapResult {
    // Sup statistics, sorted ascending.
    std::vector<double> sup_draws;
    // Grid positions left out of the sup because their sigma is zero.
    std::vector<Index> excluded;
    double alpha = 0.05;
    double c_alpha = 0.0;
};

// Quantile function of the bootstrap sup statistic, floored at the pointwise
// normal quantile so the uniform band always contains the pointwise one.
double critical_value(std::span<const double> sorted_sup_draws, double alpha);

BootstrapResult multiplier_bootstrap(const IFMatrix& influence, double alpha, int replications, std::uint64_t seed,
                                     Multiplier multiplier = Multiplier::rademacher);

struct CurveEstimate {
    DeltaGrid grid;
    Vector psi;
    Vector sigma;
    std::vector<Interval> pointwise;
    std::vector<Interval> uniform;
    double c_alpha = 0.0;
    double alpha = 0.05;
    Index n = 0;
    double p_value = 1.0;
    std::vector<double> bootstrap_sup;
};

CurveEstimate build_curve(const IFMatrix& influence, double alpha, int replications, std::uint64_t seed,
                          Multiplier multiplier = Multiplier::rademacher);

// Largest alpha at which a horizontal line still fits inside the uniform band,
// found by bisection on alpha to tolerance 1e-5.
double test_no_effect(const CurveEstimate& curve);

// Smallest critical value for which a horizontal line fits inside
// psi +/- c * sigma / sqrt(n).
double horizontal_line_threshold(const CurveEstimate& curve);

} // namespace ipsi
