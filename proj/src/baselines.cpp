#include "ipsi/baselines.hpp"

#include "ipsi/normal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace ipsi {

ATEEstimate ate_aipw(const NuisanceFit& nuis, const PointData& data, double alpha, double clip_epsilon)
{
    if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5)) throw ArgumentError("clip epsilon must lie in (0, 0.5)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
    const Index n = data.size();
    if (nuis.pi_hat.size() != n) throw ArgumentError("nuisance predictions are not aligned with the data");
    if (n < 2) throw ArgumentError("ATE needs at least two observations");

    ATEEstimate out;
    Vector contrast(n);
    for (Index i = 0; i < n; ++i) {
        const double raw = nuis.pi_hat(i);
        const double pi = std::clamp(raw, clip_epsilon, 1.0 - clip_epsilon);
        if (pi != raw) ++out.clipped;
        const double a = data.a(i);
        const double phi1 = a * (data.y(i) - nuis.mu1_hat(i)) / pi + nuis.mu1_hat(i);
        const double phi0 = (1.0 - a) * (data.y(i) - nuis.mu0_hat(i)) / (1.0 - pi) + nuis.mu0_hat(i);
        contrast(i) = phi1 - phi0;
    }
    out.estimate = contrast.mean();
    const double var = (contrast.array() - out.estimate).square().sum() / static_cast<double>(n - 1);
    out.se = std::sqrt(var / static_cast<double>(n));
    const double z = normal_quantile(1.0 - alpha / 2.0);
    out.ci_lo = out.estimate - z * out.se;
    out.ci_hi = out.estimate + z * out.se;
    return out;
}

MSMWeights msm_weights(const Panel& panel, CRef<Matrix> pi_hat, MSMWeightKind kind, double clip_epsilon)
{
    if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5)) throw ArgumentError("clip epsilon must lie in (0, 0.5)");
    const Index n = panel.size();
    const int periods = panel.periods();
    if (pi_hat.rows() != n || pi_hat.cols() != periods) throw ArgumentError("pi_hat must be n x T");

    // Empirical P(A_t = 1 | A_1..A_{t-1}) by treatment-history cell.
    std::vector<std::map<std::vector<int>, std::pair<double, double>>> cells(static_cast<std::size_t>(periods));
    std::vector<double> marginal(static_cast<std::size_t>(periods), 0.0);
    if (kind == MSMWeightKind::stabilized) {
        for (Index i = 0; i < n; ++i) {
            std::vector<int> past;
            for (int t = 0; t < periods; ++t) {
                auto& cell = cells[static_cast<std::size_t>(t)][past];
                cell.first += 1.0;
                cell.second += panel.a(i, t);
                marginal[static_cast<std::size_t>(t)] += panel.a(i, t);
                past.push_back(static_cast<int>(panel.a(i, t)));
            }
        }
        for (auto& m : marginal) m /= static_cast<double>(n);
    }

    MSMWeights out{Vector(n), 0};
    for (Index i = 0; i < n; ++i) {
        double w = 1.0;
        std::vector<int> past;
        for (int t = 0; t < periods; ++t) {
            const int a = static_cast<int>(panel.a(i, t));
            const double raw = pi_hat(i, t);
            const double pi = std::clamp(raw, clip_epsilon, 1.0 - clip_epsilon);
            if (pi != raw) ++out.clipped;
            w /= a == 1 ? pi : 1.0 - pi;
            if (kind == MSMWeightKind::stabilized) {
                const auto& level = cells[static_cast<std::size_t>(t)];
                const auto it = level.find(past);
                const double p1 = it != level.end() && it->second.first > 0.0 ? it->second.second / it->second.first
                                                                              : marginal[static_cast<std::size_t>(t)];
                w *= a == 1 ? p1 : 1.0 - p1;
            }
            past.push_back(a);
        }
        out.weights(i) = w;
    }
    return out;
}

MSMFit fit_msm(const Panel& panel, CRef<Vector> weights)
{
    const Index n = panel.size();
    if (weights.size() != n) throw ArgumentError("one weight per subject required");
    if ((weights.array() < 0.0).any() || !weights.allFinite()) throw ArgumentError("weights must be finite and non-negative");

    Matrix design(n, 2);
    design.col(0).setOnes();
    design.col(1) = panel.a.rowwise().sum();
    const Vector root_w = weights.array().sqrt();
    const Matrix weighted_design = root_w.asDiagonal() * design;
    Eigen::ColPivHouseholderQR<Matrix> qr(weighted_design);
    qr.setThreshold(1e-10);
    if (qr.rank() < 2)
        throw SingularityError("MSM design (1, sum of treatments) is rank deficient; every subject shares one cumulative treatment");

    MSMFit fit;
    fit.beta = qr.solve(Vector(root_w.cwiseProduct(panel.y)));
    const Vector resid = panel.y - design * fit.beta;
    const Eigen::Matrix2d bread = (design.transpose() * weights.asDiagonal() * design / static_cast<double>(n)).inverse();
    Eigen::Matrix2d meat = Eigen::Matrix2d::Zero();
    for (Index i = 0; i < n; ++i) {
        const Eigen::Vector2d score = weights(i) * resid(i) * design.row(i).transpose();
        meat += score * score.transpose();
    }
    meat /= static_cast<double>(n);
    const Eigen::Matrix2d cov = bread * meat * bread / static_cast<double>(n);
    fit.se = cov.diagonal().cwiseSqrt();
    return fit;
}

} // namespace ipsi
