#include "ipsi/baselines.hpp"
#include "ipsi/simulate.hpp"

#include <doctest.h>

#include <cmath>

using namespace ipsi;

TEST_CASE("AIPW ATE with oracle nuisances covers the true contrast")
{
    // single-logistic: mu1 - mu0 = 1 + 0.5 x1 with E x1 = 0.
    const DGPSpec dgp = preset("single-logistic");
    const Index n = 20000;
    const PointData data = generate_points(dgp, n, 1);
    const OracleLearners oracles = oracle_nuisances(dgp);
    const NuisanceFit nuis = crossfit_nuisances(data, assign_folds(n, 2, 2), oracles.pi, oracles.mu);
    const ATEEstimate ate = ate_aipw(nuis, data);
    CHECK(std::abs(ate.estimate - 1.0) <= 4.0 * ate.se);
    CHECK(ate.ci_lo < ate.estimate);
    CHECK(ate.ci_hi - ate.estimate == doctest::Approx(1.959963984540054 * ate.se).epsilon(1e-12));
}

TEST_CASE("ATE clips extreme propensities and counts them")
{
    PointData data;
    data.x = Matrix::Zero(4, 1);
    data.a = (Vector(4) << 1, 0, 1, 0).finished();
    data.y = (Vector(4) << 2.0, 1.0, 3.0, 0.0).finished();
    NuisanceFit nuis;
    nuis.pi_hat = (Vector(4) << 0.001, 0.5, 0.999, 0.2).finished();
    nuis.mu1_hat = Vector::Constant(4, 1.0);
    nuis.mu0_hat = Vector::Constant(4, 0.5);
    const ATEEstimate ate = ate_aipw(nuis, data, 0.05, 0.01);
    CHECK(ate.clipped == 2);
    const double c0 = (2.0 - 1.0) / 0.01 + 1.0 - 0.5;
    const double c1 = 1.0 - ((1.0 - 0.5) / 0.5 + 0.5);
    const double c2 = (3.0 - 1.0) / 0.99 + 1.0 - 0.5;
    const double c3 = 1.0 - ((0.0 - 0.5) / 0.8 + 0.5);
    CHECK(ate.estimate == doctest::Approx((c0 + c1 + c2 + c3) / 4.0).epsilon(1e-14));
    CHECK(std::isfinite(ate.se));
}

TEST_CASE("MSM weights are inverse treatment probabilities, optionally stabilized")
{
    Panel panel;
    panel.x = {Matrix::Zero(4, 1), Matrix::Zero(4, 1)};
    panel.a = (Matrix(4, 2) << 1, 1, 1, 0, 0, 1, 0, 0).finished();
    panel.y = Vector::Zero(4);
    const Matrix pi = (Matrix(4, 2) << 0.5, 0.25, 0.8, 0.005, 0.4, 0.6, 0.3, 0.9).finished();

    const MSMWeights w = msm_weights(panel, pi, MSMWeightKind::standard, 0.01);
    CHECK(w.clipped == 1);
    CHECK(w.weights(0) == doctest::Approx(1.0 / (0.5 * 0.25)));
    CHECK(w.weights(1) == doctest::Approx(1.0 / (0.8 * 0.99)));
    CHECK(w.weights(2) == doctest::Approx(1.0 / (0.6 * 0.6)));
    CHECK(w.weights(3) == doctest::Approx(1.0 / (0.7 * 0.1)));

    // Numerators: P(A1=1) = 1/2; P(A2=1 | A1=1) = 1/2; P(A2=1 | A1=0) = 1/2.
    const MSMWeights s = msm_weights(panel, pi, MSMWeightKind::stabilized, 0.01);
    for (Index i = 0; i < 4; ++i) CHECK(s.weights(i) == doctest::Approx(0.25 * w.weights(i)));
}

TEST_CASE("MSM fit solves the weighted normal equations")
{
    const Panel panel = generate_panel(preset("discrete-T2"), 500, 3);
    Vector w(500);
    for (Index i = 0; i < 500; ++i) w(i) = 0.5 + (i % 7) * 0.3;
    const MSMFit fit = fit_msm(panel, w);
    Matrix design(500, 2);
    design.col(0).setOnes();
    design.col(1) = panel.a.rowwise().sum();
    const Eigen::Matrix2d xtwx = design.transpose() * w.asDiagonal() * design;
    const Eigen::Vector2d xtwy = design.transpose() * w.asDiagonal() * panel.y;
    const Eigen::Vector2d beta = xtwx.inverse() * xtwy;
    CHECK(fit.beta(0) == doctest::Approx(beta(0)).epsilon(1e-11));
    CHECK(fit.beta(1) == doctest::Approx(beta(1)).epsilon(1e-11));
    CHECK(fit.se.allFinite());

    Panel flat = panel;
    flat.a.setZero();
    CHECK_THROWS_AS(fit_msm(flat, w), SingularityError);
}

TEST_CASE("weighted MSM with true propensities recovers the cumulative-treatment slope")
{
    // msm-compatible: E(Y^{a1,a2}) = 1.85 + 0.5 (a1 + a2).
    const DGPSpec dgp = preset("msm-compatible");
    const Index n = 50000;
    const Panel panel = generate_panel(dgp, n, 4);
    Matrix pi(n, 2);
    for (Index i = 0; i < n; ++i)
        for (int t = 1; t <= 2; ++t) pi(i, t - 1) = dgp.propensity(t, history_at(panel, i, t).features);
    for (MSMWeightKind kind : {MSMWeightKind::standard, MSMWeightKind::stabilized}) {
        const MSMFit fit = fit_msm(panel, msm_weights(panel, pi, kind).weights);
        CHECK(std::abs(fit.beta(1) - 0.5) <= 4.0 * fit.se(1));
        CHECK(std::abs(fit.beta(0) - 1.85) <= 4.0 * fit.se(0));
    }
    const double y1 = oracle_static_mean(dgp, 1, OracleMethod::exact).value;
    const double y0 = oracle_static_mean(dgp, 0, OracleMethod::exact).value;
    CHECK(y1 - y0 == doctest::Approx(1.0).epsilon(1e-12));
}
