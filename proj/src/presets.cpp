#include "ipsi/simulate.hpp"

#include <cmath>
#include <map>

namespace ipsi {

namespace {

double expit(double eta)
{
    return 1.0 / (1.0 + std::exp(-eta));
}

CovariateBlock standard_normal(Index dim)
{
    CovariateBlock block;
    block.dim = dim;
    block.mean = [dim](int, const Trajectory&) { return Vector(Vector::Zero(dim)); };
    block.sd = 1.0;
    return block;
}

// Binary scalar covariate with P(X_t = 1 | past) given by `p1`.
CovariateBlock binary(std::function<double(const Trajectory&)> p1)
{
    CovariateBlock block;
    block.dim = 1;
    block.support = {Vector::Constant(1, 0.0), Vector::Constant(1, 1.0)};
    block.probabilities = [p1 = std::move(p1)](int, const Trajectory& past) {
        const double p = p1(past);
        return Vector((Vector(2) << 1.0 - p, p).finished());
    };
    return block;
}

// Previous-period value helpers; 0 before the first period.
double last_x(const Trajectory& past)
{
    return past.x.empty() ? 0.0 : past.x.back()(0);
}

double last_a(const Trajectory& past)
{
    return past.a.empty() ? 0.0 : static_cast<double>(past.a.back());
}

// Treatment depends on x2 only, the outcome on x1 only: A and Y are independent.
DGPSpec make_null()
{
    DGPSpec dgp;
    dgp.name = "null";
    dgp.periods = 1;
    dgp.covariates = {standard_normal(2)};
    dgp.propensity = [](int, CRef<Vector> h) { return expit(-0.2 + 0.8 * h(1)); };
    dgp.outcome_mean = [](CRef<Vector> h, int) { return 0.5 + h(0); };
    dgp.noise_sd = 1.0;
    return dgp;
}

DGPSpec make_single_logistic()
{
    DGPSpec dgp;
    dgp.name = "single-logistic";
    dgp.periods = 1;
    dgp.covariates = {standard_normal(2)};
    dgp.propensity = [](int, CRef<Vector> h) { return expit(-0.3 + 0.8 * h(0) - 0.5 * h(1)); };
    dgp.outcome_mean = [](CRef<Vector> h, int a) {
        return 1.0 + h(0) + 0.5 * h(1) + a * (1.0 + 0.5 * h(0));
    };
    dgp.noise_sd = 1.0;
    return dgp;
}

// H_1 = (x1); H_2 = (x1, x2, a1).
DGPSpec make_discrete_t2()
{
    DGPSpec dgp;
    dgp.name = "discrete-T2";
    dgp.periods = 2;
    dgp.covariates = {binary([](const Trajectory&) { return 0.5; }),
                      binary([](const Trajectory& p) { return 0.3 + 0.3 * last_x(p) + 0.2 * last_a(p); })};
    dgp.propensity = [](int t, CRef<Vector> h) {
        if (t == 1) return expit(-0.5 + h(0));
        return expit(-0.3 + 0.6 * h(1) + 0.8 * h(2) - 0.4 * h(0));
    };
    dgp.outcome_mean = [](CRef<Vector> h, int a) {
        return 1.0 + 0.5 * h(0) + 0.8 * h(1) + 0.6 * h(2) + 1.0 * a + 0.3 * h(2) * a;
    };
    dgp.noise_sd = 1.0;
    return dgp;
}

// H_t = (x1..xt, a1..a_{t-1}).
DGPSpec make_discrete_t3()
{
    DGPSpec dgp;
    dgp.name = "discrete-T3";
    dgp.periods = 3;
    auto transition = [](const Trajectory& p) { return 0.2 + 0.4 * last_x(p) + 0.25 * last_a(p); };
    dgp.covariates = {binary([](const Trajectory&) { return 0.4; }), binary(transition), binary(transition)};
    dgp.propensity = [](int t, CRef<Vector> h) {
        const double x_t = h(t - 1);
        const double a_prev = t > 1 ? h(h.size() - 1) : 0.0;
        return expit(-0.4 + 0.9 * x_t - 0.5 * a_prev);
    };
    dgp.outcome_mean = [](CRef<Vector> h, int a) {
        return 0.5 + 0.4 * (h(0) + h(1) + h(2)) + 0.5 * (h(3) + h(4) + a) + 0.3 * h(2) * a;
    };
    dgp.noise_sd = 1.0;
    return dgp;
}

DGPSpec make_near_violation()
{
    DGPSpec dgp;
    dgp.name = "near-violation";
    dgp.periods = 2;
    dgp.covariates = {binary([](const Trajectory&) { return 0.5; }),
                      binary([](const Trajectory& p) { return 0.3 + 0.4 * last_x(p) + 0.2 * last_a(p); })};
    dgp.propensity = [](int t, CRef<Vector> h) {
        if (t == 1) return h(0) == 1.0 ? 0.005 : 0.6;
        return h(1) == 1.0 ? 0.995 : 0.4;
    };
    dgp.outcome_mean = [](CRef<Vector> h, int a) { return 1.0 + 0.5 * h(0) + 0.5 * h(1) + 0.5 * (h(2) + a); };
    dgp.noise_sd = 1.0;
    return dgp;
}

DGPSpec make_structural_violation()
{
    DGPSpec dgp;
    dgp.name = "structural-violation";
    dgp.periods = 1;
    dgp.covariates = {standard_normal(2)};
    dgp.propensity = [](int, CRef<Vector> h) {
        if (h(0) < -1.0) return 0.0;
        if (h(0) > 1.0) return 1.0;
        return expit(0.3 + 0.8 * h(0) - 0.4 * h(1));
    };
    dgp.outcome_mean = [](CRef<Vector> h, int a) { return 1.0 + h(0) + 0.5 * h(1) + a * (1.0 + 0.5 * h(1)); };
    dgp.noise_sd = 1.0;
    dgp.structural_violation = true;
    return dgp;
}

// E(Y^{a1,a2}) = 1.85 + 0.5 (a1 + a2): the cumulative-treatment MSM holds.
DGPSpec make_msm_compatible()
{
    DGPSpec dgp;
    dgp.name = "msm-compatible";
    dgp.periods = 2;
    dgp.covariates = {binary([](const Trajectory&) { return 0.5; }),
                      binary([](const Trajectory& p) { return 0.2 + 0.25 * last_a(p) + 0.3 * last_x(p); })};
    dgp.propensity = [](int t, CRef<Vector> h) {
        if (t == 1) return expit(-0.3 + 0.8 * h(0));
        return expit(-0.5 + h(1) + 0.5 * h(2));
    };
    dgp.outcome_mean = [](CRef<Vector> h, int a) { return 1.0 + h(0) + h(1) + 0.25 * h(2) + 0.5 * a; };
    dgp.noise_sd = 1.0;
    return dgp;
}

const std::map<std::string, DGPSpec (*)()>& catalog()
{
    static const std::map<std::string, DGPSpec (*)()> presets = {
        {"null", make_null},
        {"single-logistic", make_single_logistic},
        {"discrete-T2", make_discrete_t2},
        {"discrete-T3", make_discrete_t3},
        {"near-violation", make_near_violation},
        {"structural-violation", make_structural_violation},
        {"msm-compatible", make_msm_compatible},
    };
    return presets;
}

} // namespace

std::vector<std::string> preset_names()
{
    std::vector<std::string> names;
    for (const auto& [name, _] : catalog()) names.push_back(name);
    return names;
}

DGPSpec preset(const std::string& name)
{
    const auto it = catalog().find(name);
    if (it == catalog().end()) throw ArgumentError("unknown preset '" + name + "'");
    return it->second();
}

} // namespace ipsi
