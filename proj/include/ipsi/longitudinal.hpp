#pragma once

#include "ipsi/data.hpp"
#include "ipsi/intervention.hpp"
#include "ipsi/nuisance.hpp"
#include "ipsi/single.hpp"

#include <functional>
#include <vector>

namespace ipsi {

// Fully specified discrete longitudinal law: finite covariate supports,
// covariate transitions, propensities and the outcome regression.
struct DiscreteDGPModel {
    int periods = 1;
    // support[t] lists the possible values of X_{t+1}; all have length dims[t].
    std::vector<std::vector<Vector>> support;
    std::vector<Index> dims;
    // P(X_t = support[t-1][k] | past) where past holds x_1..x_{t-1}, a_1..a_{t-1}.
    std::function<Vector(int t, const Trajectory& past)> transition;
    // pi_t(H_t) with H_t flattened.
    std::function<double(int t, CRef<Vector> history)> propensity;
    // mu(H_T, a_T).
    std::function<double(CRef<Vector> history, int a)> outcome_mean;

    // Number of (covariate path, treatment path) terms in a full enumeration.
    double enumeration_terms() const;
    void validate() const;
};

inline constexpr double kEnumerationGuard = 1e7;

// Stochastic treatment rule: probability that A_t = 1 given H_t and pi_t(H_t).
using TreatmentPolicy = std::function<double(int t, CRef<Vector> history, double pi)>;

TreatmentPolicy incremental_policy(double delta);
TreatmentPolicy static_policy(int a);

// Sum over every treatment sequence and covariate path of
// mu(h_T, a_T) * prod_t Q(a_t | h_t) dP(x_t | h_{t-1}, a_{t-1}).
double gformula_exact(const DiscreteDGPModel& model, const TreatmentPolicy& policy);
double gcomp_exact(const DiscreteDGPModel& model, double delta);

// m_t(h_t, a_t) under the incremental intervention, by forward enumeration
// from the given history; m_T = mu.
double pseudo_outcome_exact(const DiscreteDGPModel& model, int t, CRef<Vector> history, int a, double delta);

struct ArmModels {
    RegressionModel treated;
    RegressionModel control;
    bool treated_fallback = false;
    bool control_fallback = false;

    double predict(CRef<Vector> history, int a) const;
};

// Fits m_T, ..., m_1 on the panel by regressing the pseudo-outcome
// V_{t+1} = q_{t+1} m_{t+1}(H_{t+1}, 1) + (1 - q_{t+1}) m_{t+1}(H_{t+1}, 0)
// (V_{T+1} = Y) on H_t, separately within A_t = 1 and A_t = 0.
// pi_hat is n x T, aligned with the panel. Result indexed t-1.
std::vector<ArmModels> backward_pseudo_regressions(const Panel& panel, CRef<Matrix> pi_hat, double delta,
                                                   const LearnerSpec& spec);

// Out-of-fold nuisances for a panel evaluated on the grid.
struct NuisanceFitTV {
    Matrix pi_hat;              // n x T
    std::vector<Matrix> m1;     // per grid point, n x T: m_t(H_t, 1)
    std::vector<Matrix> m0;     // per grid point, n x T: m_t(H_t, 0)
    FoldAssignment folds;
    DeltaGrid grid;
    int fallback_count = 0;
};

// Cross-fitted propensities only (used by the IPW and MSM estimators).
Matrix crossfit_propensities_tv(const Panel& panel, const FoldAssignment& folds, const LearnerSpec& spec_pi);

NuisanceFitTV crossfit_nuisances_tv(const Panel& panel, const FoldAssignment& folds, const LearnerSpec& spec_pi,
                                    const LearnerSpec& spec_m, const DeltaGrid& grid);

Vector estimate_ipw_tv(const Panel& panel, CRef<Matrix> pi_hat, const DeltaGrid& grid);

// Un-centered efficient influence function for one trajectory given the
// nuisance values along it (each of length T).
double uncentered_eif_tv(std::span<const int> a, double y, std::span<const double> pi, std::span<const double> m1,
                         std::span<const double> m0, double delta);

IFMatrix influence_matrix_tv(const Panel& panel, const NuisanceFitTV& nuis);

struct EIFResult {
    IFMatrix influence;
    Vector psi;
    NuisanceFitTV nuisances;
};

EIFResult eif_from_nuisances(NuisanceFitTV nuis, const Panel& panel);

EIFResult estimate_eif_crossfit_tv(const Panel& panel, const FoldAssignment& folds, const LearnerSpec& spec_pi,
                                   const LearnerSpec& spec_m, const DeltaGrid& grid);

} // namespace ipsi
