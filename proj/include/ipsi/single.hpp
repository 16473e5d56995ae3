#pragma once

#include "ipsi/data.hpp"
#include "ipsi/intervention.hpp"
#include "ipsi/nuisance.hpp"

namespace ipsi {

// Un-centered influence values phi_i(delta_j), one column per grid point.
struct IFMatrix {
    Matrix values;   // n x |grid|
    DeltaGrid grid;

    Index rows() const { return values.rows(); }
    Vector column_means() const;
};

// 1(A = a) / P(A = a | X) * (Y - mu_a) + mu_a. Throws NumericError when the
// observed arm has estimated probability exactly zero; incremental estimators
// use the cancellation form in uncentered_if instead.
double aipw_pseudo_outcome(const PointRecord& record, int arm, double pi_hat, double mu_hat_arm);

// Un-centered influence function of psi(delta) at one observation. The
// products delta*pi*phi_1 and (1-pi)*phi_0 are expanded before dividing, so
// pi in {0, 1} is handled without 0/0. Equals y up to rounding when delta = 1.
double uncentered_if(const PointRecord& record, double delta, double pi_hat, double mu1_hat, double mu0_hat);

Vector estimate_plugin_outcome(const NuisanceFit& nuis, const PointData& data, const DeltaGrid& grid);
Vector estimate_ipw(const NuisanceFit& nuis, const PointData& data, const DeltaGrid& grid);

IFMatrix influence_matrix(const NuisanceFit& nuis, const PointData& data, const DeltaGrid& grid);

struct OneStepResult {
    IFMatrix influence;
    Vector psi;
    Vector fold_sizes;
    Matrix fold_psi;   // K x |grid|, per-fold means
    NuisanceFit nuisances;
};

// Per-fold column means of the influence values (K x |grid|) and the pooled
// estimate sum_k (n_k / n) * fold mean.
struct FoldPooling {
    Vector fold_sizes;
    Matrix fold_psi;
    Vector psi;
};
FoldPooling pool_folds(const IFMatrix& influence, const FoldAssignment& folds);

// psi from given out-of-fold nuisances: per-fold means pooled with weights n_k / n.
OneStepResult onestep_from_nuisances(NuisanceFit nuis, const PointData& data, const DeltaGrid& grid);

OneStepResult estimate_onestep_crossfit(const PointData& data, const FoldAssignment& folds,
                                        const LearnerSpec& spec_pi, const LearnerSpec& spec_mu,
                                        const DeltaGrid& grid);

} // namespace ipsi
