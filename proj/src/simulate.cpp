#include "ipsi/simulate.hpp"

#include "ipsi/intervention.hpp"
#include "ipsi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace ipsi {

std::vector<Index> DGPSpec::dims() const
{
    std::vector<Index> out;
    for (const auto& block : covariates) out.push_back(block.dim);
    return out;
}

bool DGPSpec::discrete() const
{
    return std::all_of(covariates.begin(), covariates.end(), [](const CovariateBlock& b) { return b.discrete(); });
}

void DGPSpec::validate() const
{
    if (periods < 1) throw ArgumentError("DGP '" + name + "' needs at least one period");
    if (static_cast<int>(covariates.size()) != periods)
        throw ArgumentError("DGP '" + name + "' needs one covariate block per period");
    if (!propensity || !outcome_mean) throw ArgumentError("DGP '" + name + "' is missing a model component");
    if (!(noise_sd >= 0.0)) throw ArgumentError("DGP '" + name + "' noise sd must be non-negative");
    for (const auto& block : covariates) {
        if (block.dim < 1) throw ArgumentError("DGP '" + name + "' covariate dimension must be positive");
        if (block.discrete()) {
            if (!block.probabilities) throw ArgumentError("DGP '" + name + "' discrete block lacks probabilities");
            for (const auto& v : block.support)
                if (v.size() != block.dim) throw ArgumentError("DGP '" + name + "' support value has wrong length");
        } else if (!block.mean) {
            throw ArgumentError("DGP '" + name + "' Gaussian block lacks a mean");
        }
    }
}

DiscreteDGPModel DGPSpec::discrete_model() const
{
    validate();
    if (!discrete()) throw ArgumentError("DGP '" + name + "' has continuous covariates; exact enumeration unavailable");
    DiscreteDGPModel model;
    model.periods = periods;
    model.dims = dims();
    for (const auto& block : covariates) model.support.push_back(block.support);
    auto blocks = covariates;
    model.transition = [blocks](int t, const Trajectory& past) {
        return blocks[static_cast<std::size_t>(t - 1)].probabilities(t, past);
    };
    model.propensity = propensity;
    model.outcome_mean = outcome_mean;
    return model;
}

namespace {

Vector draw_covariate(const CovariateBlock& block, int t, const Trajectory& past, CounterRng& rng)
{
    if (block.discrete()) {
        const Vector p = block.probabilities(t, past);
        const double u = rng.uniform();
        double acc = 0.0;
        for (Index k = 0; k < p.size(); ++k) {
            acc += p(k);
            if (u < acc) return block.support[static_cast<std::size_t>(k)];
        }
        return block.support.back();
    }
    Vector x = block.mean(t, past);
    for (Index j = 0; j < x.size(); ++j) x(j) += block.sd * rng.normal();
    return x;
}

double checked_propensity(const DGPSpec& dgp, int t, CRef<Vector> h)
{
    const double pi = dgp.propensity(t, h);
    if (!(pi >= 0.0 && pi <= 1.0)) throw NumericError("DGP '" + dgp.name + "' produced a propensity outside [0,1]");
    return pi;
}

struct Draw {
    Trajectory traj;
    double y = 0.0;
};

// One subject from the observational law (policy empty) or the intervened law.
Draw simulate_subject(const DGPSpec& dgp, std::uint64_t seed, std::uint64_t subject, std::uint32_t tag,
                      const TreatmentPolicy& policy)
{
    Draw out;
    for (int t = 1; t <= dgp.periods; ++t) {
        CounterRng rng(seed, subject, tag + static_cast<std::uint32_t>(t));
        out.traj.x.push_back(draw_covariate(dgp.covariates[static_cast<std::size_t>(t - 1)], t, out.traj, rng));
        const Vector h = out.traj.history(t);
        const double pi = checked_propensity(dgp, t, h);
        const double p = policy ? policy(t, h, pi) : pi;
        out.traj.a.push_back(p >= 1.0 ? 1 : (p <= 0.0 ? 0 : (rng.uniform() < p ? 1 : 0)));
    }
    CounterRng rng(seed, subject, tag + static_cast<std::uint32_t>(dgp.periods + 1));
    const Vector h = out.traj.history(dgp.periods);
    out.y = dgp.outcome_mean(h, out.traj.a.back()) + dgp.noise_sd * rng.normal();
    return out;
}

OracleResult monte_carlo(const DGPSpec& dgp, const TreatmentPolicy& policy, Index draws, std::uint64_t seed)
{
    if (draws < 2) throw ArgumentError("Monte Carlo oracle needs at least 2 draws");
    constexpr Index chunk = 4096;
    const Index chunks = (draws + chunk - 1) / chunk;
    std::vector<double> sums(static_cast<std::size_t>(chunks), 0.0), sq(static_cast<std::size_t>(chunks), 0.0);
#pragma omp parallel for schedule(dynamic)
    for (Index c = 0; c < chunks; ++c) {
        double s = 0.0, s2 = 0.0;
        const Index end = std::min(draws, (c + 1) * chunk);
        for (Index d = c * chunk; d < end; ++d) {
            const double y = simulate_subject(dgp, seed, static_cast<std::uint64_t>(d), stream_tag::oracle, policy).y;
            s += y;
            s2 += y * y;
        }
        sums[static_cast<std::size_t>(c)] = s;
        sq[static_cast<std::size_t>(c)] = s2;
    }
    double s = 0.0, s2 = 0.0;
    for (Index c = 0; c < chunks; ++c) {
        s += sums[static_cast<std::size_t>(c)];
        s2 += sq[static_cast<std::size_t>(c)];
    }
    const double n = static_cast<double>(draws);
    const double mean = s / n;
    const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
    OracleResult r;
    r.value = mean;
    r.method = OracleMethod::monte_carlo;
    r.draws = draws;
    r.se = std::sqrt(var / n);
    return r;
}

OracleResult oracle_policy(const DGPSpec& dgp, const TreatmentPolicy& policy, OracleMethod method, Index draws,
                           std::uint64_t seed)
{
    dgp.validate();
    if (method == OracleMethod::exact) {
        OracleResult r;
        r.value = gformula_exact(dgp.discrete_model(), policy);
        r.method = OracleMethod::exact;
        return r;
    }
    return monte_carlo(dgp, policy, draws, seed);
}

} // namespace

Panel generate_panel(const DGPSpec& dgp, Index n, std::uint64_t seed)
{
    dgp.validate();
    if (n < 1) throw ArgumentError("sample size must be positive");
    const int T = dgp.periods;
    Panel panel;
    panel.ids.resize(static_cast<std::size_t>(n));
    for (int t = 0; t < T; ++t) panel.x.emplace_back(n, dgp.covariates[static_cast<std::size_t>(t)].dim);
    panel.a.resize(n, T);
    panel.y.resize(n);
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i) {
        const Draw d = simulate_subject(dgp, seed, static_cast<std::uint64_t>(i), stream_tag::generate, {});
        panel.ids[static_cast<std::size_t>(i)] = std::to_string(i + 1);
        for (int t = 0; t < T; ++t) {
            panel.x[static_cast<std::size_t>(t)].row(i) = d.traj.x[static_cast<std::size_t>(t)].transpose();
            panel.a(i, t) = d.traj.a[static_cast<std::size_t>(t)];
        }
        panel.y(i) = d.y;
    }
    return panel;
}

PointData generate_points(const DGPSpec& dgp, Index n, std::uint64_t seed)
{
    if (dgp.periods != 1) throw ArgumentError("point data requires a single-period DGP");
    return to_point_data(generate_panel(dgp, n, seed));
}

std::string to_string(OracleMethod method)
{
    return method == OracleMethod::exact ? "exact" : "monte_carlo";
}

OracleResult oracle_psi(const DGPSpec& dgp, double delta, OracleMethod method, Index draws, std::uint64_t seed)
{
    detail::check_delta(delta);
    return oracle_policy(dgp, incremental_policy(delta), method, draws, seed);
}

OracleResult oracle_static_mean(const DGPSpec& dgp, int a, OracleMethod method, Index draws, std::uint64_t seed)
{
    if (a != 0 && a != 1) throw ArgumentError("static treatment must be 0 or 1");
    if (dgp.structural_violation) {
        OracleResult r;
        r.value = std::numeric_limits<double>::quiet_NaN();
        r.method = method;
        r.defined = false;
        return r;
    }
    return oracle_policy(dgp, static_policy(a), method, draws, seed);
}

OracleLearners oracle_nuisances(const DGPSpec& dgp)
{
    dgp.validate();
    std::shared_ptr<const DiscreteDGPModel> model;
    if (dgp.discrete()) model = std::make_shared<const DiscreteDGPModel>(dgp.discrete_model());
    const int T = dgp.periods;
    auto propensity = dgp.propensity;
    auto outcome = dgp.outcome_mean;
    OracleLearners out;
    out.pi = LearnerSpec::make_oracle([propensity](CRef<Vector> h, const OracleQuery& q) { return propensity(q.t, h); });
    out.mu = LearnerSpec::make_oracle([model, outcome, T](CRef<Vector> h, const OracleQuery& q) {
        if (q.arm != 0 && q.arm != 1) throw ArgumentError("outcome oracle needs an arm");
        if (q.t == T) return outcome(h, q.arm);
        if (!model) throw ArgumentError("intermediate pseudo-outcome oracle requires discrete covariates");
        return pseudo_outcome_exact(*model, q.t, h, q.arm, q.delta);
    });
    return out;
}

OracleResult efficiency_bound(const DGPSpec& dgp, Index draws, std::uint64_t seed)
{
    dgp.validate();
    if (dgp.periods != 1) throw ArgumentError("efficiency bound is implemented for a single period");
    OracleResult r;
    const double inf = std::numeric_limits<double>::infinity();
    const double var = dgp.noise_sd * dgp.noise_sd;
    const auto& block = dgp.covariates.front();
    const Trajectory empty;

    // Summand pieces at one covariate value; cate returned separately.
    auto pieces = [&](const Vector& x, double& cate) {
        const double pi = checked_propensity(dgp, 1, x);
        cate = dgp.outcome_mean(x, 1) - dgp.outcome_mean(x, 0);
        if (pi <= 0.0 || pi >= 1.0) return inf;
        return var / pi + var / (1.0 - pi);
    };

    if (block.discrete()) {
        const Vector p = block.probabilities(1, empty);
        double ate = 0.0, base = 0.0;
        std::vector<double> cates(block.support.size());
        for (std::size_t k = 0; k < block.support.size(); ++k) {
            if (p(static_cast<Index>(k)) == 0.0) continue;
            const double term = pieces(block.support[k], cates[k]);
            base += p(static_cast<Index>(k)) * term;
            ate += p(static_cast<Index>(k)) * cates[k];
        }
        double spread = 0.0;
        for (std::size_t k = 0; k < block.support.size(); ++k)
            spread += p(static_cast<Index>(k)) * (cates[k] - ate) * (cates[k] - ate);
        r.value = base + spread;
        r.method = OracleMethod::exact;
        return r;
    }

    if (dgp.structural_violation) {
        r.value = inf;
        r.method = OracleMethod::exact;
        return r;
    }
    if (draws < 2) throw ArgumentError("Monte Carlo oracle needs at least 2 draws");
    Vector base(draws), cate(draws);
#pragma omp parallel for schedule(static)
    for (Index d = 0; d < draws; ++d) {
        CounterRng rng(seed, static_cast<std::uint64_t>(d), stream_tag::oracle);
        const Vector x = draw_covariate(block, 1, empty, rng);
        double c = 0.0;
        base(d) = pieces(x, c);
        cate(d) = c;
    }
    const double ate = cate.mean();
    const Vector terms = base.array() + (cate.array() - ate).square();
    r.value = terms.mean();
    r.method = OracleMethod::monte_carlo;
    r.draws = draws;
    r.se = std::sqrt((terms.array() - r.value).square().sum() / (draws - 1.0) / draws);
    return r;
}

double bias_bound_diagnostic(const NuisanceFit& nuis, const PointData& data, const DGPSpec& dgp)
{
    if (dgp.periods != 1) throw ArgumentError("bias bound is defined for a single period");
    const Index n = data.size();
    if (nuis.pi_hat.size() != n) throw SizeError("nuisance fit does not match the data");
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        const Vector x = data.x.row(i).transpose();
        const double diff = dgp.propensity(1, x) - nuis.pi_hat(i);
        const double gap = std::max(dgp.outcome_mean(x, 1) - nuis.mu1_hat(i), dgp.outcome_mean(x, 0) - nuis.mu0_hat(i));
        total += diff * diff + diff * gap;
    }
    return total / static_cast<double>(n);
}

} // namespace ipsi
