#include "ipsi/single.hpp"

#include <cmath>

namespace ipsi {

Vector IFMatrix::column_means() const
{
    return values.colwise().mean().transpose();
}

double aipw_pseudo_outcome(const PointRecord& record, int arm, double pi_hat, double mu_hat_arm)
{
    detail::check_probability(pi_hat);
    if (arm != 0 && arm != 1) throw ArgumentError("arm must be 0 or 1");
    if (record.a != arm) return mu_hat_arm;
    const double p_arm = arm == 1 ? pi_hat : 1.0 - pi_hat;
    if (p_arm == 0.0)
        throw NumericError("aipw_pseudo_outcome: P(A = a | X) is zero for an observed unit; use the cancellation form");
    return (record.y - mu_hat_arm) / p_arm + mu_hat_arm;
}

double uncentered_if(const PointRecord& record, double delta, double pi_hat, double mu1_hat, double mu0_hat)
{
    detail::check_delta(delta);
    if (!std::isfinite(pi_hat) || !std::isfinite(mu1_hat) || !std::isfinite(mu0_hat))
        throw NumericError("uncentered_if: non-finite nuisance prediction");
    detail::check_probability(pi_hat);
    const double a = record.a;
    const double y = record.y;
    const double denom = shift_denominator(pi_hat, delta);
    // delta*pi*phi_1 + (1-pi)*phi_0, expanded so that no 1/pi or 1/(1-pi) appears.
    const double weighted = delta * a * (y - mu1_hat) + delta * pi_hat * mu1_hat + (1.0 - a) * (y - mu0_hat) +
                            (1.0 - pi_hat) * mu0_hat;
    const double correction = delta * (mu1_hat - mu0_hat) * (a - pi_hat) / (denom * denom);
    return weighted / denom + correction;
}

namespace {

void check_alignment(const NuisanceFit& nuis, const PointData& data)
{
    const Index n = data.size();
    if (nuis.pi_hat.size() != n || nuis.mu1_hat.size() != n || nuis.mu0_hat.size() != n)
        throw ArgumentError("nuisance predictions are not aligned with the data");
}

} // namespace

Vector estimate_plugin_outcome(const NuisanceFit& nuis, const PointData& data, const DeltaGrid& grid)
{
    check_alignment(nuis, data);
    Vector psi(grid.size());
    const Array pi = nuis.pi_hat.array();
    for (Index j = 0; j < grid.size(); ++j) {
        const double delta = grid[j];
        const Array q = shifted_propensities(pi, delta);
        psi(j) = (q * nuis.mu1_hat.array() + (1.0 - q) * nuis.mu0_hat.array()).mean();
    }
    return psi;
}

Vector estimate_ipw(const NuisanceFit& nuis, const PointData& data, const DeltaGrid& grid)
{
    check_alignment(nuis, data);
    Vector psi(grid.size());
    for (Index j = 0; j < grid.size(); ++j)
        psi(j) = (ipw_factors(data.a.array(), nuis.pi_hat.array(), grid[j]) * data.y.array()).mean();
    return psi;
}

IFMatrix influence_matrix(const NuisanceFit& nuis, const PointData& data, const DeltaGrid& grid)
{
    check_alignment(nuis, data);
    const Index n = data.size();
    IFMatrix out{Matrix(n, grid.size()), grid};
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < grid.size(); ++j) {
        for (Index i = 0; i < n; ++i) {
            const PointRecord r{Vector(), static_cast<int>(data.a(i)), data.y(i)};
            out.values(i, j) = uncentered_if(r, grid[j], nuis.pi_hat(i), nuis.mu1_hat(i), nuis.mu0_hat(i));
        }
    }
    return out;
}

FoldPooling pool_folds(const IFMatrix& influence, const FoldAssignment& folds)
{
    const Index n = influence.rows();
    const bool have_folds = folds.size() == n && folds.k >= 1;
    const int k = have_folds ? folds.k : 1;
    FoldPooling out{Vector::Zero(k), Matrix::Zero(k, influence.values.cols()), Vector::Zero(influence.values.cols())};
    for (Index i = 0; i < n; ++i) {
        const int f = have_folds ? folds.fold_of[static_cast<std::size_t>(i)] : 0;
        out.fold_sizes(f) += 1.0;
        out.fold_psi.row(f) += influence.values.row(i);
    }
    for (int f = 0; f < k; ++f) {
        if (out.fold_sizes(f) == 0.0) continue;
        out.fold_psi.row(f) /= out.fold_sizes(f);
        out.psi += (out.fold_sizes(f) / static_cast<double>(n)) * out.fold_psi.row(f).transpose();
    }
    return out;
}

OneStepResult onestep_from_nuisances(NuisanceFit nuis, const PointData& data, const DeltaGrid& grid)
{
    OneStepResult result;
    result.influence = influence_matrix(nuis, data, grid);
    FoldPooling pooled = pool_folds(result.influence, nuis.folds);
    result.psi = std::move(pooled.psi);
    result.fold_sizes = std::move(pooled.fold_sizes);
    result.fold_psi = std::move(pooled.fold_psi);
    result.nuisances = std::move(nuis);
    return result;
}

OneStepResult estimate_onestep_crossfit(const PointData& data, const FoldAssignment& folds, const LearnerSpec& spec_pi,
                                        const LearnerSpec& spec_mu, const DeltaGrid& grid)
{
    if (folds.k < 2) throw ArgumentError("cross-fitting needs at least two folds");
    return onestep_from_nuisances(crossfit_nuisances(data, folds, spec_pi, spec_mu), data, grid);
}

} // namespace ipsi
