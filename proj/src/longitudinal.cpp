#include "ipsi/longitudinal.hpp"

#include <cmath>
#include <numeric>

namespace ipsi {

double DiscreteDGPModel::enumeration_terms() const
{
    double terms = 1.0;
    for (const auto& s : support) terms *= 2.0 * static_cast<double>(s.size());
    return terms;
}

void DiscreteDGPModel::validate() const
{
    if (periods < 1) throw ArgumentError("discrete model: T must be positive");
    if (static_cast<int>(support.size()) != periods || static_cast<int>(dims.size()) != periods)
        throw ArgumentError("discrete model: one support and dimension per period required");
    for (int t = 0; t < periods; ++t) {
        if (support[static_cast<std::size_t>(t)].empty()) throw ArgumentError("discrete model: empty support");
        for (const auto& v : support[static_cast<std::size_t>(t)])
            if (v.size() != dims[static_cast<std::size_t>(t)]) throw ArgumentError("discrete model: support dimension mismatch");
    }
    if (!transition || !propensity || !outcome_mean) throw ArgumentError("discrete model: missing component function");
}

TreatmentPolicy incremental_policy(double delta)
{
    detail::check_delta(delta);
    return [delta](int, CRef<Vector>, double pi) { return shift_propensity(pi, delta); };
}

TreatmentPolicy static_policy(int a)
{
    if (a != 0 && a != 1) throw ArgumentError("static policy treatment must be 0 or 1");
    return [a](int, CRef<Vector>, double) { return static_cast<double>(a); };
}

namespace {

Vector transition_checked(const DiscreteDGPModel& model, int t, const Trajectory& past)
{
    Vector p = model.transition(t, past);
    const auto& support = model.support[static_cast<std::size_t>(t - 1)];
    if (p.size() != static_cast<Index>(support.size())) throw ArgumentError("transition size does not match support");
    if (std::abs(p.sum() - 1.0) > 1e-10 || (p.array() < 0.0).any())
        throw ArgumentError("transition probabilities at t=" + std::to_string(t) + " do not form a distribution");
    return p;
}

// E[ mu(H_T, A_T) ] from period t onwards, given the trajectory through a_{t-1}.
double continue_from(const DiscreteDGPModel& model, const TreatmentPolicy& policy, Trajectory& traj, int t)
{
    const Vector p = transition_checked(model, t, traj);
    const auto& support = model.support[static_cast<std::size_t>(t - 1)];
    double total = 0.0;
    for (std::size_t k = 0; k < support.size(); ++k) {
        const double px = p(static_cast<Index>(k));
        if (px == 0.0) continue;
        traj.x.push_back(support[k]);
        const Vector h = traj.history(t);
        const double q1 = policy(t, h, model.propensity(t, h));
        for (int a = 0; a <= 1; ++a) {
            const double pa = a == 1 ? q1 : 1.0 - q1;
            if (pa == 0.0) continue;
            double value;
            if (t == model.periods) {
                value = model.outcome_mean(h, a);
            } else {
                traj.a.push_back(a);
                value = continue_from(model, policy, traj, t + 1);
                traj.a.pop_back();
            }
            total += px * pa * value;
        }
        traj.x.pop_back();
    }
    return total;
}

void check_guard(const DiscreteDGPModel& model)
{
    model.validate();
    if (model.enumeration_terms() > kEnumerationGuard)
        throw SizeError("exact enumeration needs " + std::to_string(model.enumeration_terms()) +
                        " terms (limit 1e7); use the Monte-Carlo oracle");
}

} // namespace

double gformula_exact(const DiscreteDGPModel& model, const TreatmentPolicy& policy)
{
    check_guard(model);
    Trajectory traj;
    return continue_from(model, policy, traj, 1);
}

double gcomp_exact(const DiscreteDGPModel& model, double delta)
{
    return gformula_exact(model, incremental_policy(delta));
}

double pseudo_outcome_exact(const DiscreteDGPModel& model, int t, CRef<Vector> history, int a, double delta)
{
    check_guard(model);
    if (t < 1 || t > model.periods) throw ArgumentError("pseudo_outcome_exact: t out of range");
    if (t == model.periods) return model.outcome_mean(history, a);
    Trajectory traj = Trajectory::from_history(history, t, model.dims);
    traj.a.push_back(a);
    return continue_from(model, incremental_policy(delta), traj, t + 1);
}

double ArmModels::predict(CRef<Vector> history, int a) const
{
    return a == 1 ? treated.predict(history) : control.predict(history);
}

std::vector<ArmModels> backward_pseudo_regressions(const Panel& panel, CRef<Matrix> pi_hat, double delta,
                                                   const LearnerSpec& spec)
{
    detail::check_delta(delta);
    const int periods = panel.periods();
    const Index n = panel.size();
    if (pi_hat.rows() != n || pi_hat.cols() != periods) throw ArgumentError("pi_hat must be n x T");

    std::vector<ArmModels> models(static_cast<std::size_t>(periods));
    Vector target = panel.y;
    for (int t = periods; t >= 1; --t) {
        const Matrix h = history_matrix(panel, t);
        ArmModels& arms = models[static_cast<std::size_t>(t - 1)];
        for (int a = 0; a <= 1; ++a) {
            std::vector<Index> rows;
            for (Index i = 0; i < n; ++i)
                if (panel.a(i, t - 1) == a) rows.push_back(i);
            RegressionModel model;
            bool fallback = false;
            if (spec.kind == LearnerKind::oracle) {
                model = fit_regression(h.topRows(0), target.head(0), spec, OracleQuery{t, a, delta});
            } else if (rows.empty()) {
                model = constant_regression(n > 0 ? target.mean() : 0.0, h.cols());
                fallback = true;
            } else {
                model = fit_regression(select_rows(h, rows), select_rows(target, rows), spec, OracleQuery{t, a, delta});
            }
            (a == 1 ? arms.treated : arms.control) = std::move(model);
            (a == 1 ? arms.treated_fallback : arms.control_fallback) = fallback;
        }
        if (t > 1 && spec.kind != LearnerKind::oracle) {
            Vector next(n);
            for (Index i = 0; i < n; ++i) {
                const Vector hi = h.row(i).transpose();
                const double q = shift_propensity(pi_hat(i, t - 1), delta);
                next(i) = q * arms.treated.predict(hi) + (1.0 - q) * arms.control.predict(hi);
            }
            target = std::move(next);
        }
    }
    return models;
}

namespace {

struct FoldPropensities {
    std::vector<Index> train;
    std::vector<Index> test;
    Matrix pi_train;   // |train| x T, in-sample predictions of the complement models
    Matrix pi_test;    // |test| x T
};

FoldPropensities fit_fold_propensities(const Panel& panel, const FoldAssignment& folds, int k, const LearnerSpec& spec_pi)
{
    FoldPropensities out{folds.complement(k), folds.members(k), {}, {}};
    const int periods = panel.periods();
    out.pi_train.resize(static_cast<Index>(out.train.size()), periods);
    out.pi_test.resize(static_cast<Index>(out.test.size()), periods);
    for (int t = 1; t <= periods; ++t) {
        const Matrix h = history_matrix(panel, t);
        const Matrix h_train = select_rows(h, out.train);
        const ProbabilityModel model =
            fit_probability(h_train, select_rows(Vector(panel.a.col(t - 1)), out.train), spec_pi, OracleQuery{t});
        out.pi_train.col(t - 1) = model.predict_rows(h_train);
        out.pi_test.col(t - 1) = model.predict_rows(select_rows(h, out.test));
    }
    return out;
}

void check_folds(const Panel& panel, const FoldAssignment& folds)
{
    if (folds.size() != panel.size()) throw ArgumentError("fold assignment does not cover the panel");
    if (folds.k < 2) throw ArgumentError("cross-fitting needs at least two folds");
}

} // namespace

Matrix crossfit_propensities_tv(const Panel& panel, const FoldAssignment& folds, const LearnerSpec& spec_pi)
{
    check_folds(panel, folds);
    spec_pi.validate();
    Matrix pi_hat(panel.size(), panel.periods());
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < folds.k; ++k) {
        const FoldPropensities fp = fit_fold_propensities(panel, folds, k, spec_pi);
        for (std::size_t r = 0; r < fp.test.size(); ++r) pi_hat.row(fp.test[r]) = fp.pi_test.row(static_cast<Index>(r));
    }
    return pi_hat;
}

NuisanceFitTV crossfit_nuisances_tv(const Panel& panel, const FoldAssignment& folds, const LearnerSpec& spec_pi,
                                    const LearnerSpec& spec_m, const DeltaGrid& grid)
{
    check_folds(panel, folds);
    spec_pi.validate();
    spec_m.validate();
    const Index n = panel.size();
    const int periods = panel.periods();
    const Index m = grid.size();

    NuisanceFitTV fit;
    fit.pi_hat.resize(n, periods);
    fit.m1.assign(static_cast<std::size_t>(m), Matrix(n, periods));
    fit.m0.assign(static_cast<std::size_t>(m), Matrix(n, periods));
    fit.folds = folds;
    fit.grid = grid;

    std::vector<FoldPropensities> props(static_cast<std::size_t>(folds.k));
    std::vector<Panel> train_panels(static_cast<std::size_t>(folds.k));
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < folds.k; ++k) {
        props[static_cast<std::size_t>(k)] = fit_fold_propensities(panel, folds, k, spec_pi);
        train_panels[static_cast<std::size_t>(k)] = panel.subset(props[static_cast<std::size_t>(k)].train);
    }
    for (int k = 0; k < folds.k; ++k) {
        const auto& fp = props[static_cast<std::size_t>(k)];
        for (std::size_t r = 0; r < fp.test.size(); ++r) fit.pi_hat.row(fp.test[r]) = fp.pi_test.row(static_cast<Index>(r));
    }

    std::vector<int> fallbacks(static_cast<std::size_t>(folds.k * m), 0);
    std::vector<Matrix> histories;
    for (int t = 1; t <= periods; ++t) histories.push_back(history_matrix(panel, t));

#pragma omp parallel for schedule(dynamic)
    for (Index job = 0; job < folds.k * m; ++job) {
        const int k = static_cast<int>(job / m);
        const Index j = job % m;
        const auto& fp = props[static_cast<std::size_t>(k)];
        const std::vector<ArmModels> models =
            backward_pseudo_regressions(train_panels[static_cast<std::size_t>(k)], fp.pi_train, grid[j], spec_m);
        int fb = 0;
        for (int t = 1; t <= periods; ++t) {
            const ArmModels& arms = models[static_cast<std::size_t>(t - 1)];
            fb += arms.treated_fallback + arms.control_fallback;
            for (const Index i : fp.test) {
                const Vector h = histories[static_cast<std::size_t>(t - 1)].row(i).transpose();
                fit.m1[static_cast<std::size_t>(j)](i, t - 1) = arms.treated.predict(h);
                fit.m0[static_cast<std::size_t>(j)](i, t - 1) = arms.control.predict(h);
            }
        }
        fallbacks[static_cast<std::size_t>(job)] = fb;
    }
    fit.fallback_count = std::accumulate(fallbacks.begin(), fallbacks.end(), 0);
    return fit;
}

Vector estimate_ipw_tv(const Panel& panel, CRef<Matrix> pi_hat, const DeltaGrid& grid)
{
    const Index n = panel.size();
    const int periods = panel.periods();
    if (pi_hat.rows() != n || pi_hat.cols() != periods) throw ArgumentError("pi_hat must be n x T");
    Vector psi(grid.size());
    std::vector<int> a(static_cast<std::size_t>(periods));
    std::vector<double> pi(static_cast<std::size_t>(periods));
    Vector weighted(n);
    for (Index j = 0; j < grid.size(); ++j) {
        for (Index i = 0; i < n; ++i) {
            for (int t = 0; t < periods; ++t) {
                a[static_cast<std::size_t>(t)] = static_cast<int>(panel.a(i, t));
                pi[static_cast<std::size_t>(t)] = pi_hat(i, t);
            }
            weighted(i) = trajectory_weight(a, pi, grid[j]) * panel.y(i);
        }
        psi(j) = weighted.mean();
    }
    return psi;
}

double uncentered_eif_tv(std::span<const int> a, double y, std::span<const double> pi, std::span<const double> m1,
                         std::span<const double> m0, double delta)
{
    detail::check_delta(delta);
    const std::size_t periods = a.size();
    if (pi.size() != periods || m1.size() != periods || m0.size() != periods)
        throw ArgumentError("uncentered_eif_tv: sequences differ in length");
    // The bracket's divisor delta / (1 - delta) enters as a multiplier that is
    // exactly zero at delta = 1.
    const double scale = delta == 1.0 ? 0.0 : (1.0 - delta) / delta;
    double cumulative = 1.0;
    double total = 0.0;
    for (std::size_t t = 0; t < periods; ++t) {
        if (!std::isfinite(pi[t]) || !std::isfinite(m1[t]) || !std::isfinite(m0[t]))
            throw NumericError("uncentered_eif_tv: non-finite nuisance value");
        cumulative *= ipw_factor(a[t], pi[t], delta);
        const double denom = shift_denominator(pi[t], delta);
        const double at = a[t];
        const double residual = (at * (1.0 - pi[t]) - (1.0 - at) * delta * pi[t]) * scale;
        const double shifted_mean = (delta * pi[t] * m1[t] + (1.0 - pi[t]) * m0[t]) / denom;
        total += residual * shifted_mean * cumulative;
    }
    return total + cumulative * y;
}

IFMatrix influence_matrix_tv(const Panel& panel, const NuisanceFitTV& nuis)
{
    const Index n = panel.size();
    const int periods = panel.periods();
    const Index m = nuis.grid.size();
    if (nuis.pi_hat.rows() != n || static_cast<Index>(nuis.m1.size()) != m)
        throw ArgumentError("time-varying nuisances are not aligned with the panel");
    IFMatrix out{Matrix(n, m), nuis.grid};
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i) {
        std::vector<int> a(static_cast<std::size_t>(periods));
        std::vector<double> pi(static_cast<std::size_t>(periods)), m1(a.size()), m0(a.size());
        for (int t = 0; t < periods; ++t) {
            a[static_cast<std::size_t>(t)] = static_cast<int>(panel.a(i, t));
            pi[static_cast<std::size_t>(t)] = nuis.pi_hat(i, t);
        }
        for (Index j = 0; j < m; ++j) {
            for (int t = 0; t < periods; ++t) {
                m1[static_cast<std::size_t>(t)] = nuis.m1[static_cast<std::size_t>(j)](i, t);
                m0[static_cast<std::size_t>(t)] = nuis.m0[static_cast<std::size_t>(j)](i, t);
            }
            out.values(i, j) = uncentered_eif_tv(a, panel.y(i), pi, m1, m0, nuis.grid[j]);
        }
    }
    return out;
}

EIFResult eif_from_nuisances(NuisanceFitTV nuis, const Panel& panel)
{
    EIFResult result;
    result.influence = influence_matrix_tv(panel, nuis);
    result.psi = pool_folds(result.influence, nuis.folds).psi;
    result.nuisances = std::move(nuis);
    return result;
}

EIFResult estimate_eif_crossfit_tv(const Panel& panel, const FoldAssignment& folds, const LearnerSpec& spec_pi,
                                   const LearnerSpec& spec_m, const DeltaGrid& grid)
{
    return eif_from_nuisances(crossfit_nuisances_tv(panel, folds, spec_pi, spec_m, grid), panel);
}

} // namespace ipsi
