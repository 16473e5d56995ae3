#include "ipsi/inference.hpp"

#include "ipsi/normal.hpp"
#include "ipsi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ipsi {

namespace {

void check_alpha(double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
}

constexpr Index kBootstrapChunk = 128;

} // namespace

Vector variance_estimate(const IFMatrix& influence)
{
    const Index n = influence.rows();
    if (n < 2) throw ArgumentError("variance estimate needs at least two observations");
    const Vector mean = influence.column_means();
    Vector sigma(influence.values.cols());
    for (Index j = 0; j < sigma.size(); ++j)
        sigma(j) = std::sqrt((influence.values.col(j).array() - mean(j)).square().sum() / static_cast<double>(n - 1));
    return sigma;
}

Interval pointwise_ci(double psi_hat, double sigma_hat, Index n, double alpha)
{
    check_alpha(alpha);
    if (n < 1) throw ArgumentError("sample size must be positive");
    const double half = normal_quantile(1.0 - alpha / 2.0) * sigma_hat / std::sqrt(static_cast<double>(n));
    return {psi_hat - half, psi_hat + half};
}

double critical_value(std::span<const double> sorted_sup_draws, double alpha)
{
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in (0, 1]");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    if (sorted_sup_draws.empty()) return z;
    const auto b = static_cast<double>(sorted_sup_draws.size());
    const auto rank = static_cast<Index>(std::ceil((1.0 - alpha) * b - 1e-9));
    const Index idx = std::clamp<Index>(rank - 1, 0, static_cast<Index>(sorted_sup_draws.size()) - 1);
    return std::max(sorted_sup_draws[static_cast<std::size_t>(idx)], z);
}

BootstrapResult multiplier_bootstrap(const IFMatrix& influence, double alpha, int replications, std::uint64_t seed,
                                     Multiplier multiplier)
{
    check_alpha(alpha);
    if (replications < 1) throw ArgumentError("bootstrap needs at least one replication");
    const Index n = influence.rows();
    const Vector mean = influence.column_means();
    const Vector sigma = variance_estimate(influence);

    BootstrapResult result;
    result.alpha = alpha;
    std::vector<Index> kept;
    for (Index j = 0; j < sigma.size(); ++j) (sigma(j) > 0.0 ? kept : result.excluded).push_back(j);

    result.sup_draws.assign(static_cast<std::size_t>(replications), 0.0);
    if (!kept.empty()) {
        Matrix standardized(n, static_cast<Index>(kept.size()));
        for (std::size_t c = 0; c < kept.size(); ++c) {
            const Index j = kept[c];
            standardized.col(static_cast<Index>(c)) = (influence.values.col(j).array() - mean(j)) / sigma(j);
        }
        const double scale = 1.0 / std::sqrt(static_cast<double>(n));
        const Index chunks = (replications + kBootstrapChunk - 1) / kBootstrapChunk;
#pragma omp parallel for schedule(dynamic)
        for (Index chunk = 0; chunk < chunks; ++chunk) {
            const Index first = chunk * kBootstrapChunk;
            const Index rows = std::min<Index>(kBootstrapChunk, replications - first);
            Matrix xi(rows, n);
            for (Index r = 0; r < rows; ++r) {
                CounterRng rng(seed, static_cast<std::uint64_t>(first + r), stream_tag::bootstrap);
                if (multiplier == Multiplier::rademacher) {
                    std::uint64_t bits = 0;
                    for (Index i = 0; i < n; ++i) {
                        if (i % 64 == 0) bits = rng.next_u64();
                        xi(r, i) = (bits & 1u) ? 1.0 : -1.0;
                        bits >>= 1;
                    }
                } else {
                    for (Index i = 0; i < n; ++i) xi(r, i) = rng.normal();
                }
            }
            const Matrix process = xi * standardized;
            for (Index r = 0; r < rows; ++r)
                result.sup_draws[static_cast<std::size_t>(first + r)] = scale * process.row(r).cwiseAbs().maxCoeff();
        }
    }
    std::sort(result.sup_draws.begin(), result.sup_draws.end());
    result.c_alpha = critical_value(result.sup_draws, alpha);
    return result;
}

CurveEstimate build_curve(const IFMatrix& influence, double alpha, int replications, std::uint64_t seed,
                          Multiplier multiplier)
{
    CurveEstimate curve;
    curve.grid = influence.grid;
    curve.alpha = alpha;
    curve.n = influence.rows();
    curve.psi = influence.column_means();
    curve.sigma = variance_estimate(influence);
    const BootstrapResult boot = multiplier_bootstrap(influence, alpha, replications, seed, multiplier);
    curve.c_alpha = boot.c_alpha;
    curve.bootstrap_sup = boot.sup_draws;
    const double root_n = std::sqrt(static_cast<double>(curve.n));
    for (Index j = 0; j < curve.psi.size(); ++j) {
        curve.pointwise.push_back(pointwise_ci(curve.psi(j), curve.sigma(j), curve.n, alpha));
        const double half = curve.c_alpha * curve.sigma(j) / root_n;
        curve.uniform.push_back({curve.psi(j) - half, curve.psi(j) + half});
    }
    curve.p_value = test_no_effect(curve);
    return curve;
}

double horizontal_line_threshold(const CurveEstimate& curve)
{
    const Index m = curve.psi.size();
    const double root_n = std::sqrt(static_cast<double>(curve.n));
    double threshold = 0.0;
    for (Index j = 0; j < m; ++j) {
        for (Index k = 0; k < m; ++k) {
            const double gap = curve.psi(k) - curve.psi(j);
            if (gap <= 0.0) continue;
            const double spread = curve.sigma(j) + curve.sigma(k);
            if (spread == 0.0) return std::numeric_limits<double>::infinity();
            threshold = std::max(threshold, gap * root_n / spread);
        }
    }
    return threshold;
}

double test_no_effect(const CurveEstimate& curve)
{
    if (curve.bootstrap_sup.empty()) throw Error("test_no_effect: the curve carries no bootstrap draws");
    const double needed = horizontal_line_threshold(curve);
    auto line_fits = [&](double alpha) { return critical_value(curve.bootstrap_sup, alpha) >= needed; };

    if (line_fits(1.0)) return 1.0;
    double lo = 0.0;
    double hi = 1.0;
    if (!line_fits(1e-12)) return 0.0;
    while (hi - lo > 1e-5) {
        const double mid = 0.5 * (lo + hi);
        (line_fits(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace ipsi
