#include "ipsi/inference.hpp"
#include "ipsi/normal.hpp"
#include "ipsi/rng.hpp"
#include "ipsi/simulate.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>

using namespace ipsi;

namespace {

// n x m influence matrix whose column j has mean psi(j) and exchangeable noise.
IFMatrix synthetic(Index n, const Vector& psi, double rho, std::uint64_t seed)
{
    const Index m = psi.size();
    IFMatrix inf{Matrix(n, m), DeltaGrid::log_spaced(0.2, 5.0, static_cast<int>(m))};
    CounterRng rng(seed, 0);
    for (Index i = 0; i < n; ++i) {
        const double common = rng.normal();
        for (Index j = 0; j < m; ++j)
            inf.values(i, j) = psi(j) + std::sqrt(rho) * common + std::sqrt(1.0 - rho) * rng.normal();
    }
    return inf;
}

} // namespace

TEST_CASE("variance and pointwise intervals")
{
    const IFMatrix inf = synthetic(500, Vector::Constant(3, 1.0), 0.5, 1);
    const Vector sigma = variance_estimate(inf);
    for (Index j = 0; j < 3; ++j) {
        const Vector c = inf.values.col(j);
        const double mean = c.mean();
        double ss = 0.0;
        for (Index i = 0; i < 500; ++i) ss += (c(i) - mean) * (c(i) - mean);
        CHECK(sigma(j) == doctest::Approx(std::sqrt(ss / 499.0)).epsilon(1e-13));
    }
    const Interval ci = pointwise_ci(2.0, 1.5, 900, 0.05);
    CHECK(ci.hi - 2.0 == doctest::Approx(1.959963984540054 * 1.5 / 30.0).epsilon(1e-14));
    CHECK(2.0 - ci.lo == doctest::Approx(ci.hi - 2.0).epsilon(1e-14));
}

TEST_CASE("critical value is an order statistic floored at the normal quantile")
{
    std::vector<double> draws;
    for (int b = 1; b <= 1000; ++b) draws.push_back(b / 100.0);
    CHECK(critical_value(draws, 0.05) == 9.5);
    CHECK(critical_value(draws, 0.5) == 5.0);
    std::vector<double> small(100, 0.5);
    CHECK(critical_value(small, 0.05) == doctest::Approx(1.959963984540054).epsilon(1e-15));
    CHECK(critical_value({}, 0.1) == doctest::Approx(oracle::normal_quantile(0.95)).epsilon(1e-12));
}

TEST_CASE("single-column sup statistic recovers the two-sided normal quantile")
{
    const IFMatrix inf = synthetic(3000, Vector::Constant(1, 0.0), 0.0, 2);
    for (Multiplier mult : {Multiplier::rademacher, Multiplier::gaussian}) {
        const BootstrapResult boot = multiplier_bootstrap(inf, 0.05, 20000, 3, mult);
        const auto idx = static_cast<std::size_t>(0.95 * 20000) - 1;
        CHECK(boot.sup_draws[idx] == doctest::Approx(1.96).epsilon(0.04));
        CHECK(boot.c_alpha >= normal_quantile(0.975));
    }
}

TEST_CASE("perfectly correlated columns behave like one column; independent ones widen the band")
{
    const IFMatrix corr = synthetic(2000, Vector::Zero(10), 0.999999, 4);
    const IFMatrix indep = synthetic(2000, Vector::Zero(10), 0.0, 4);
    const double c_corr = multiplier_bootstrap(corr, 0.05, 5000, 5).c_alpha;
    const double c_indep = multiplier_bootstrap(indep, 0.05, 5000, 5).c_alpha;
    CHECK(c_corr == doctest::Approx(1.96).epsilon(0.05));
    // max of 10 independent |N(0,1)|: P(max <= c) = (2 Phi(c) - 1)^10 = 0.95.
    const double c_ind_true = oracle::normal_quantile(0.5 + 0.5 * std::pow(0.95, 0.1));
    CHECK(c_indep == doctest::Approx(c_ind_true).epsilon(0.05));
}

TEST_CASE("bootstrap is deterministic given the seed and excludes zero-variance columns")
{
    IFMatrix inf = synthetic(400, Vector::LinSpaced(5, 0.0, 1.0), 0.3, 6);
    inf.values.col(2).setConstant(7.0);
    const BootstrapResult a = multiplier_bootstrap(inf, 0.1, 700, 11);
    const BootstrapResult b = multiplier_bootstrap(inf, 0.1, 700, 11);
    const BootstrapResult c = multiplier_bootstrap(inf, 0.1, 700, 12);
    CHECK(a.sup_draws == b.sup_draws);
    CHECK(a.sup_draws != c.sup_draws);
    CHECK(a.excluded == std::vector<Index>{2});
    CHECK(std::is_sorted(a.sup_draws.begin(), a.sup_draws.end()));
#ifdef _OPENMP
    const int before = omp_get_max_threads();
    omp_set_num_threads(1);
    const BootstrapResult one = multiplier_bootstrap(inf, 0.1, 700, 11);
    omp_set_num_threads(4);
    const BootstrapResult four = multiplier_bootstrap(inf, 0.1, 700, 11);
    omp_set_num_threads(before);
    CHECK(one.sup_draws == four.sup_draws);
#endif
}

TEST_CASE("uniform band contains the pointwise interval")
{
    const IFMatrix inf = synthetic(1000, Vector::LinSpaced(8, 1.0, 1.4), 0.6, 7);
    const CurveEstimate curve = build_curve(inf, 0.05, 2000, 8);
    CHECK(curve.c_alpha >= normal_quantile(0.975));
    for (Index j = 0; j < 8; ++j) {
        CHECK(curve.uniform[static_cast<std::size_t>(j)].lo <= curve.pointwise[static_cast<std::size_t>(j)].lo);
        CHECK(curve.uniform[static_cast<std::size_t>(j)].hi >= curve.pointwise[static_cast<std::size_t>(j)].hi);
        const double half = curve.c_alpha * curve.sigma(j) / std::sqrt(1000.0);
        CHECK(curve.uniform[static_cast<std::size_t>(j)].hi == doctest::Approx(curve.psi(j) + half).epsilon(1e-14));
    }
}

TEST_CASE("no-effect p-value matches the closed form")
{
    for (double slope : {0.0, 0.02, 0.05, 0.08, 0.12, 0.3}) {
        CAPTURE(slope);
        const IFMatrix inf = synthetic(1500, Vector::LinSpaced(12, 1.0, 1.0 + slope), 0.7, 9);
        const CurveEstimate curve = build_curve(inf, 0.05, 3000, 10);
        const double c_star = horizontal_line_threshold(curve);
        double brute = 0.0;
        for (Index j = 0; j < 12; ++j)
            for (Index k = 0; k < 12; ++k) {
                const double gap = curve.psi(k) - curve.psi(j);
                brute = std::max(brute, gap * std::sqrt(1500.0) / (curve.sigma(j) + curve.sigma(k)));
            }
        CHECK(c_star == doctest::Approx(brute).epsilon(1e-14));
        const double expected = oracle::closed_form_pvalue(curve.bootstrap_sup, c_star);
        CHECK(std::abs(curve.p_value - expected) < 2e-5);
        CHECK(curve.p_value >= 0.0);
        CHECK(curve.p_value <= 1.0);
    }
}

TEST_CASE("a flat curve gives p = 1 and a steep one p near 0")
{
    IFMatrix flat = synthetic(500, Vector::Zero(4), 0.5, 12);
    flat.values.rowwise() -= flat.values.colwise().mean();
    flat.values.array() += 3.0;
    const CurveEstimate c1 = build_curve(flat, 0.05, 1000, 13);
    CHECK(horizontal_line_threshold(c1) < 1e-6);
    CHECK(c1.p_value == 1.0);

    const CurveEstimate c2 = build_curve(synthetic(500, Vector::LinSpaced(4, 0.0, 3.0), 0.5, 14), 0.05, 1000, 15);
    CHECK(c2.p_value < 1e-4);

    CurveEstimate empty = c2;
    empty.bootstrap_sup.clear();
    CHECK_THROWS_AS(test_no_effect(empty), Error);
}

TEST_CASE("no-effect test rejects a strong effect in at least 90% of replications")
{
    const DGPSpec dgp = preset("single-logistic");
    const DeltaGrid grid = DeltaGrid::log_spaced(0.2, 5.0, 25);
    int rejections = 0;
    const int reps = 30;
    for (int r = 0; r < reps; ++r) {
        const PointData data = generate_points(dgp, 2000, 900 + r);
        const OneStepResult fit = estimate_onestep_crossfit(data, assign_folds(data.size(), 5, 900 + r),
                                                            LearnerSpec::logistic(), LearnerSpec::linear(), grid);
        if (build_curve(fit.influence, 0.05, 1000, 900 + r).p_value < 0.05) ++rejections;
    }
    CHECK(rejections >= 27);
}
