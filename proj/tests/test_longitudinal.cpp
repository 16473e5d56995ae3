#include "ipsi/inference.hpp"
#include "ipsi/longitudinal.hpp"
#include "ipsi/rng.hpp"
#include "ipsi/simulate.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace ipsi;

namespace {

double expit(double eta)
{
    return 1.0 / (1.0 + std::exp(-eta));
}

// Mean of the EIF over the observational law of a discrete DGP, with Y
// replaced by its conditional mean. `pi_of` and the m functions supply the
// nuisances plugged into the EIF.
double exact_eif_mean(const DGPSpec& dgp, double delta,
                      const std::function<double(int, const Vector&)>& pi_of,
                      const std::function<double(int, const Vector&, int)>& m_of)
{
    const int T = dgp.periods;
    std::vector<int> k(static_cast<std::size_t>(T), 0), a(static_cast<std::size_t>(T), 0);
    double total = 0.0;
    while (true) {
        Trajectory traj;
        double prob = 1.0;
        std::vector<double> pi, m1, m0;
        for (int t = 1; t <= T; ++t) {
            const auto& block = dgp.covariates[static_cast<std::size_t>(t - 1)];
            prob *= block.probabilities(t, traj)(k[static_cast<std::size_t>(t - 1)]);
            traj.x.push_back(block.support[static_cast<std::size_t>(k[static_cast<std::size_t>(t - 1)])]);
            const Vector h = traj.history(t);
            const double p = dgp.propensity(t, h);
            const int at = a[static_cast<std::size_t>(t - 1)];
            prob *= at == 1 ? p : 1.0 - p;
            pi.push_back(pi_of(t, h));
            m1.push_back(m_of(t, h, 1));
            m0.push_back(m_of(t, h, 0));
            traj.a.push_back(at);
        }
        if (prob > 0.0) {
            const double y = dgp.outcome_mean(traj.history(T), traj.a.back());
            total += prob * uncentered_eif_tv(traj.a, y, pi, m1, m0, delta);
        }
        int pos = 0;
        for (; pos < 2 * T; ++pos) {
            if (pos < T) {
                const auto limit = static_cast<int>(dgp.covariates[static_cast<std::size_t>(pos)].support.size());
                if (++k[static_cast<std::size_t>(pos)] < limit) break;
                k[static_cast<std::size_t>(pos)] = 0;
            } else {
                if (++a[static_cast<std::size_t>(pos - T)] < 2) break;
                a[static_cast<std::size_t>(pos - T)] = 0;
            }
        }
        if (pos == 2 * T) break;
    }
    return total;
}

} // namespace

TEST_CASE("recursive g-formula matches flat enumeration")
{
    for (const char* name : {"discrete-T2", "discrete-T3", "near-violation", "msm-compatible"}) {
        const DGPSpec dgp = preset(name);
        const DiscreteDGPModel model = dgp.discrete_model();
        for (double delta : {1e-3, 0.2, 0.5, 1.0, 2.0, 5.0, 300.0}) {
            CAPTURE(name);
            CAPTURE(delta);
            const double flat = oracle::flat_gformula(dgp, [&](double pi) { return oracle::odds_shift(pi, delta); });
            CHECK(gcomp_exact(model, delta) == doctest::Approx(flat).epsilon(1e-13));
        }
        for (int a : {0, 1}) {
            const double flat = oracle::flat_gformula(dgp, [a](double) { return static_cast<double>(a); });
            CHECK(gformula_exact(model, static_policy(a)) == doctest::Approx(flat).epsilon(1e-13));
        }
    }
}

TEST_CASE("m_1 on discrete-T2 at delta = 2 matches hand enumeration")
{
    const DGPSpec dgp = preset("discrete-T2");
    const DiscreteDGPModel model = dgp.discrete_model();
    const double delta = 2.0;
    for (double x1 : {0.0, 1.0})
        for (int a1 : {0, 1}) {
            const double p2 = 0.3 + 0.3 * x1 + 0.2 * a1;
            double expected = 0.0;
            for (double x2 : {0.0, 1.0}) {
                const double px = x2 == 1.0 ? p2 : 1.0 - p2;
                const double pi2 = expit(-0.3 + 0.6 * x2 + 0.8 * a1 - 0.4 * x1);
                const double q = delta * pi2 / (delta * pi2 + 1.0 - pi2);
                const double base = 1.0 + 0.5 * x1 + 0.8 * x2 + 0.6 * a1;
                expected += px * (q * (base + 1.0 + 0.3 * a1) + (1.0 - q) * base);
            }
            const Vector h = Vector::Constant(1, x1);
            CHECK(pseudo_outcome_exact(model, 1, h, a1, delta) == doctest::Approx(expected).epsilon(1e-14));
        }
}

TEST_CASE("m_T is the outcome regression")
{
    const DGPSpec dgp = preset("discrete-T3");
    const DiscreteDGPModel model = dgp.discrete_model();
    Vector h(5);
    h << 1, 0, 1, 1, 0;
    for (int a : {0, 1}) CHECK(pseudo_outcome_exact(model, 3, h, a, 0.7) == dgp.outcome_mean(h, a));
}

TEST_CASE("EIF mean: exact under true nuisances, robust to m, second order in pi")
{
    for (const char* name : {"discrete-T2", "discrete-T3"}) {
        const DGPSpec dgp = preset(name);
        const DiscreteDGPModel model = dgp.discrete_model();
        for (double delta : {0.4, 1.0, 3.0}) {
            CAPTURE(name);
            CAPTURE(delta);
            const double psi = gcomp_exact(model, delta);
            auto true_pi = [&](int t, const Vector& h) { return dgp.propensity(t, h); };
            auto true_m = [&](int t, const Vector& h, int a) { return pseudo_outcome_exact(model, t, h, a, delta); };
            auto wrong_pi = [](int, const Vector& h) { return 0.35 + 0.3 * h(0); };
            auto wrong_m = [](int t, const Vector& h, int a) { return 0.2 * t - h.sum() + 0.7 * a; };
            CHECK(exact_eif_mean(dgp, delta, true_pi, true_m) == doctest::Approx(psi).epsilon(1e-12));
            CHECK(exact_eif_mean(dgp, delta, true_pi, wrong_m) == doctest::Approx(psi).epsilon(1e-12));
            if (delta == 1.0) continue;
            CHECK(std::abs(exact_eif_mean(dgp, delta, wrong_pi, wrong_m) - psi) > 1e-6);
            // Perturbing pi by eps moves the mean by O(eps^2).
            auto bias = [&](double eps) {
                auto perturbed = [&](int t, const Vector& h) { return dgp.propensity(t, h) + eps * (0.5 - h(0)); };
                return exact_eif_mean(dgp, delta, perturbed, true_m) - psi;
            };
            const double ratio = bias(0.02) / bias(0.01);
            CHECK(ratio > 3.6);
            CHECK(ratio < 4.4);
        }
    }
}

TEST_CASE("with one period the longitudinal EIF equals the single-time-point IF")
{
    CounterRng rng(3, 0);
    for (int i = 0; i < 5000; ++i) {
        const double pi = i % 50 == 0 ? static_cast<double>(i % 100 == 0) : rng.uniform();
        const int a = pi == 0.0 ? 0 : (pi == 1.0 ? 1 : (rng.bernoulli(pi) ? 1 : 0));
        const double y = 2.0 * rng.normal();
        const double m1 = rng.normal(), m0 = rng.normal();
        const double delta = std::exp(6.0 * rng.uniform() - 3.0);
        const std::vector<int> as{a};
        const std::vector<double> ps{pi}, m1s{m1}, m0s{m0};
        const double tv = uncentered_eif_tv(as, y, ps, m1s, m0s, delta);
        const double single = uncentered_if({Vector(), a, y}, delta, pi, m1, m0);
        REQUIRE(tv == doctest::Approx(single).epsilon(1e-11));
    }
}

TEST_CASE("delta = 1 collapses every estimator to the sample mean")
{
    const std::vector<int> a{1, 0, 1};
    const std::vector<double> pi{0.2, 0.7, 0.5}, m1{3.0, 1.0, -2.0}, m0{0.5, 0.5, 0.5};
    CHECK(uncentered_eif_tv(a, 4.25, pi, m1, m0, 1.0) == 4.25);

    const Panel panel = generate_panel(preset("discrete-T3"), 900, 4);
    const FoldAssignment folds = assign_folds(panel.size(), 3, 5);
    const DeltaGrid grid({0.5, 1.0, 2.0});
    const EIFResult r =
        estimate_eif_crossfit_tv(panel, folds, LearnerSpec::boosted_stumps(), LearnerSpec::boosted_stumps(), grid);
    CHECK(std::abs(r.psi(1) - panel.y.mean()) < 1e-12);
    CHECK(std::abs(estimate_ipw_tv(panel, r.nuisances.pi_hat, grid)(1) - panel.y.mean()) < 1e-12);
    CHECK(r.influence.rows() == 900);
    CHECK(r.influence.values.cols() == 3);
}

TEST_CASE("time-varying IPW with one period matches single-time-point IPW")
{
    const PointData data = generate_points(preset("single-logistic"), 700, 6);
    const FoldAssignment folds = assign_folds(700, 5, 7);
    const NuisanceFit nuis = crossfit_nuisances(data, folds, LearnerSpec::logistic(), LearnerSpec::linear());
    const DeltaGrid grid = DeltaGrid::log_spaced(0.2, 5.0, 9);
    const Vector single = estimate_ipw(nuis, data, grid);
    const Vector tv = estimate_ipw_tv(to_panel(data), nuis.pi_hat, grid);
    for (Index j = 0; j < grid.size(); ++j) CHECK(tv(j) == doctest::Approx(single(j)).epsilon(1e-14));
}

TEST_CASE("oracle nuisances give the exact pseudo-outcomes and an unbiased estimate")
{
    const DGPSpec dgp = preset("discrete-T2");
    const DiscreteDGPModel model = dgp.discrete_model();
    const Index n = 30000;
    const Panel panel = generate_panel(dgp, n, 8);
    const OracleLearners oracles = oracle_nuisances(dgp);
    const DeltaGrid grid({0.5, 2.0});
    const EIFResult r = estimate_eif_crossfit_tv(panel, assign_folds(n, 2, 9), oracles.pi, oracles.mu, grid);
    for (Index i = 0; i < 50; ++i) {
        const Vector h1 = history_matrix(panel, 1).row(i).transpose();
        CHECK(r.nuisances.m1[1](i, 0) == pseudo_outcome_exact(model, 1, h1, 1, 2.0));
        CHECK(r.nuisances.pi_hat(i, 0) == dgp.propensity(1, h1));
    }
    const Vector sigma = variance_estimate(r.influence);
    for (Index j = 0; j < grid.size(); ++j)
        CHECK(std::abs(r.psi(j) - gcomp_exact(model, grid[j])) <= 4.0 * sigma(j) / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("enumeration guard and transition checks")
{
    DGPSpec dgp = preset("discrete-T3");
    DiscreteDGPModel big = dgp.discrete_model();
    big.periods = 8;
    big.dims.assign(8, 1);
    std::vector<Vector> support;
    for (int k = 0; k < 8; ++k) support.push_back(Vector::Constant(1, k));
    big.support.assign(8, support);
    CHECK(big.enumeration_terms() > kEnumerationGuard);
    CHECK_THROWS_AS(gcomp_exact(big, 2.0), SizeError);

    DiscreteDGPModel broken = dgp.discrete_model();
    broken.transition = [](int, const Trajectory&) { return Vector((Vector(2) << 0.5, 0.6).finished()); };
    CHECK_THROWS_AS(gcomp_exact(broken, 2.0), ArgumentError);
}
