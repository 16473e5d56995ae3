#pragma once

#include "ipsi/data.hpp"
#include "ipsi/nuisance.hpp"

namespace ipsi {

struct ATEEstimate {
    double estimate = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int clipped = 0;
};

// AIPW estimate of E(Y^1) - E(Y^0); pi_hat is clipped to [eps, 1 - eps].
ATEEstimate ate_aipw(const NuisanceFit& nuis, const PointData& data, double alpha = 0.05, double clip_epsilon = 0.01);

enum class MSMWeightKind { standard, stabilized };

struct MSMWeights {
    Vector weights;
    int clipped = 0;
};

// Inverse products of P(A_t | H_t), optionally stabilized by the empirical
// P(A_t | A_1..A_{t-1}); every denominator factor is clipped at eps.
MSMWeights msm_weights(const Panel& panel, CRef<Matrix> pi_hat, MSMWeightKind kind, double clip_epsilon = 0.01);

// Cumulative-treatment MSM m(a; beta) = beta_0 + beta_1 * sum_t a_t.
struct MSMSpec {
    MSMWeightKind weights = MSMWeightKind::standard;
};

struct MSMFit {
    Eigen::Vector2d beta;
    Eigen::Vector2d se;   // sandwich, treating weights as known
};

// Solves sum_i h(A_i) W_i (Y_i - m(A_i; beta)) = 0 with h = (1, sum_t a_t).
MSMFit fit_msm(const Panel& panel, CRef<Vector> weights);

} // namespace ipsi
