#include "ipsi/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ipsi {

namespace {

inline double expit(double eta)
{
    if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

inline double softplus(double eta)
{
    return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

class ConstantPredictor final : public detail::Predictor {
public:
    explicit ConstantPredictor(double value) : value_(value) {}
    double predict(CRef<Vector>) const override { return value_; }

private:
    double value_;
};

class AffinePredictor final : public detail::Predictor {
public:
    AffinePredictor(double intercept, Vector coef, bool logistic)
        : intercept_(intercept), coef_(std::move(coef)), logistic_(logistic) {}

    double predict(CRef<Vector> x) const override
    {
        const double eta = intercept_ + coef_.dot(x);
        return logistic_ ? expit(eta) : eta;
    }

private:
    double intercept_;
    Vector coef_;
    bool logistic_;
};

struct Stump {
    Index feature = 0;
    double threshold = 0.0;
    double left = 0.0;
    double right = 0.0;
};

class StumpEnsemble final : public detail::Predictor {
public:
    StumpEnsemble(double base, std::vector<Stump> stumps, bool logistic)
        : base_(base), stumps_(std::move(stumps)), logistic_(logistic) {}

    double predict(CRef<Vector> x) const override
    {
        double score = base_;
        for (const auto& s : stumps_) score += x(s.feature) <= s.threshold ? s.left : s.right;
        return logistic_ ? expit(score) : score;
    }

private:
    double base_;
    std::vector<Stump> stumps_;
    bool logistic_;
};

class KnnPredictor final : public detail::Predictor {
public:
    KnnPredictor(Matrix x, Vector y, int k) : x_(std::move(x)), y_(std::move(y)), k_(k) {}

    double predict(CRef<Vector> q) const override
    {
        const Index n = x_.rows();
        const Index k = std::min<Index>(k_, n);
        std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = {(x_.row(i).transpose() - q).squaredNorm(), i};
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        double sum = 0.0;
        for (Index j = 0; j < k; ++j) sum += y_(dist[static_cast<std::size_t>(j)].second);
        return sum / static_cast<double>(k);
    }

private:
    Matrix x_;
    Vector y_;
    int k_;
};

class OraclePredictor final : public detail::Predictor {
public:
    OraclePredictor(OracleFn fn, OracleQuery query) : fn_(std::move(fn)), query_(query) {}
    double predict(CRef<Vector> x) const override { return fn_(x, query_); }

private:
    OracleFn fn_;
    OracleQuery query_;
};

// Ridge least squares with an unpenalized intercept.
std::shared_ptr<const detail::Predictor> fit_linear(CRef<Matrix> x, CRef<Vector> y, double ridge)
{
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Matrix xc = x.rowwise() - x_mean;
    Matrix gram = xc.transpose() * xc;
    gram.diagonal().array() += ridge;
    const Vector coef = gram.ldlt().solve(xc.transpose() * (y.array() - y_mean).matrix());
    return std::make_shared<AffinePredictor>(y_mean - x_mean.dot(coef), coef, false);
}

// Candidate split thresholds per feature: midpoints between distinct values,
// thinned to at most `max_bins` quantile cut points.
struct BinnedFeatures {
    std::vector<std::vector<double>> thresholds;
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> bin;   // n x d
};

BinnedFeatures bin_features(CRef<Matrix> x, int max_bins)
{
    const Index n = x.rows();
    const Index d = x.cols();
    BinnedFeatures out;
    out.thresholds.resize(static_cast<std::size_t>(d));
    out.bin.resize(n, d);
    std::vector<double> sorted(static_cast<std::size_t>(n));
    for (Index j = 0; j < d; ++j) {
        for (Index i = 0; i < n; ++i) sorted[static_cast<std::size_t>(i)] = x(i, j);
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> distinct;
        std::unique_copy(sorted.begin(), sorted.end(), std::back_inserter(distinct));
        auto& thr = out.thresholds[static_cast<std::size_t>(j)];
        if (static_cast<int>(distinct.size()) <= max_bins) {
            for (std::size_t k = 0; k + 1 < distinct.size(); ++k) thr.push_back(0.5 * (distinct[k] + distinct[k + 1]));
        } else {
            for (int b = 1; b < max_bins; ++b) {
                const double v = sorted[static_cast<std::size_t>(static_cast<double>(b) * static_cast<double>(n) / max_bins)];
                const auto next = std::upper_bound(distinct.begin(), distinct.end(), v);
                if (next == distinct.end()) break;
                const double cut = 0.5 * (v + *next);
                if (thr.empty() || cut > thr.back()) thr.push_back(cut);
            }
        }
        for (Index i = 0; i < n; ++i)
            out.bin(i, j) = static_cast<int>(std::lower_bound(thr.begin(), thr.end(), x(i, j)) - thr.begin());
    }
    return out;
}

// Gradient boosting with depth-one trees and Newton leaf values. Squared error
// for regression, binomial deviance (logit link) for probabilities.
std::shared_ptr<const detail::Predictor> fit_stumps(CRef<Matrix> x, CRef<Vector> y, const LearnerSpec& spec,
                                                    bool logistic)
{
    constexpr int kMaxBins = 64;
    constexpr double kLambda = 1.0;
    const Index n = x.rows();
    const Index d = x.cols();
    const BinnedFeatures binned = bin_features(x, kMaxBins);

    const double mean = y.mean();
    const double base = logistic ? std::log(mean / (1.0 - mean)) : mean;
    Vector score = Vector::Constant(n, base);
    Vector grad(n), hess(n);
    std::vector<Stump> stumps;
    stumps.reserve(static_cast<std::size_t>(spec.rounds));

    std::vector<double> g_bin, h_bin;
    std::vector<Index> c_bin;
    for (int round = 0; round < spec.rounds; ++round) {
        for (Index i = 0; i < n; ++i) {
            if (logistic) {
                const double p = expit(score(i));
                grad(i) = p - y(i);
                hess(i) = std::max(p * (1.0 - p), 1e-12);
            } else {
                grad(i) = score(i) - y(i);
                hess(i) = 1.0;
            }
        }
        const double g_total = grad.sum();
        const double h_total = hess.sum();
        const double parent = g_total * g_total / (h_total + kLambda);

        double best_gain = 1e-12 * std::max(1.0, parent);
        Stump best;
        bool found = false;
        for (Index j = 0; j < d; ++j) {
            const auto& thr = binned.thresholds[static_cast<std::size_t>(j)];
            if (thr.empty()) continue;
            const std::size_t bins = thr.size() + 1;
            g_bin.assign(bins, 0.0);
            h_bin.assign(bins, 0.0);
            c_bin.assign(bins, 0);
            for (Index i = 0; i < n; ++i) {
                const auto b = static_cast<std::size_t>(binned.bin(i, j));
                g_bin[b] += grad(i);
                h_bin[b] += hess(i);
                ++c_bin[b];
            }
            double gl = 0.0, hl = 0.0;
            Index cl = 0;
            for (std::size_t k = 0; k + 1 < bins; ++k) {
                gl += g_bin[k];
                hl += h_bin[k];
                cl += c_bin[k];
                const Index cr = n - cl;
                if (cl < spec.min_leaf || cr < spec.min_leaf) continue;
                const double gr = g_total - gl;
                const double hr = h_total - hl;
                const double gain = gl * gl / (hl + kLambda) + gr * gr / (hr + kLambda) - parent;
                if (gain > best_gain) {
                    best_gain = gain;
                    best = Stump{j, thr[k], -spec.learning_rate * gl / (hl + kLambda),
                                 -spec.learning_rate * gr / (hr + kLambda)};
                    found = true;
                }
            }
        }
        if (!found) break;
        for (Index i = 0; i < n; ++i) score(i) += x(i, best.feature) <= best.threshold ? best.left : best.right;
        stumps.push_back(best);
    }
    return std::make_shared<StumpEnsemble>(base, std::move(stumps), logistic);
}

void check_shapes(CRef<Matrix> features, CRef<Vector> targets, Index min_rows, const char* what)
{
    if (features.rows() != targets.size())
        throw ArgumentError(std::string(what) + ": feature rows (" + std::to_string(features.rows()) +
                            ") do not match target length (" + std::to_string(targets.size()) + ")");
    if (features.rows() < min_rows)
        throw ArgumentError(std::string(what) + ": need at least " + std::to_string(min_rows) + " rows");
    if (!features.allFinite() || !targets.allFinite()) throw ArgumentError(std::string(what) + ": non-finite input");
}

} // namespace

LearnerSpec LearnerSpec::logistic()
{
    LearnerSpec s;
    s.kind = LearnerKind::logistic;
    return s;
}

LearnerSpec LearnerSpec::linear()
{
    LearnerSpec s;
    s.kind = LearnerKind::linear;
    return s;
}

LearnerSpec LearnerSpec::boosted_stumps(int rounds, double learning_rate)
{
    LearnerSpec s;
    s.kind = LearnerKind::boosted_stumps;
    s.rounds = rounds;
    s.learning_rate = learning_rate;
    return s;
}

LearnerSpec LearnerSpec::knn(int k)
{
    LearnerSpec s;
    s.kind = LearnerKind::knn;
    s.k = k;
    return s;
}

LearnerSpec LearnerSpec::make_oracle(OracleFn fn)
{
    LearnerSpec s;
    s.kind = LearnerKind::oracle;
    s.oracle = std::move(fn);
    return s;
}

void LearnerSpec::validate() const
{
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ArgumentError("learning rate must lie in (0, 1]");
    if (rounds < 1) throw ArgumentError("rounds must be at least 1");
    if (min_leaf < 1) throw ArgumentError("min_leaf must be at least 1");
    if (k < 1) throw ArgumentError("k must be at least 1");
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ArgumentError("ridge penalty must be non-negative");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5)) throw ArgumentError("clip epsilon must lie in (0, 0.5)");
    if (kind == LearnerKind::oracle && !oracle) throw ArgumentError("oracle learner requires a function");
}

std::string to_string(LearnerKind kind)
{
    switch (kind) {
    case LearnerKind::logistic: return "logistic";
    case LearnerKind::linear: return "linear";
    case LearnerKind::boosted_stumps: return "boosted-stumps";
    case LearnerKind::knn: return "knn";
    case LearnerKind::oracle: return "oracle";
    }
    return "unknown";
}

std::string LearnerSpec::describe() const
{
    std::ostringstream out;
    out << to_string(kind);
    switch (kind) {
    case LearnerKind::boosted_stumps:
        out << ":rounds=" << rounds << ",lr=" << learning_rate << ",min_leaf=" << min_leaf;
        break;
    case LearnerKind::knn: out << ":k=" << k; break;
    case LearnerKind::logistic:
    case LearnerKind::linear: out << ":ridge=" << ridge; break;
    case LearnerKind::oracle: break;
    }
    if (clip) out << (kind == LearnerKind::oracle ? ":" : ",") << "clip=" << clip_epsilon;
    return out.str();
}

LearnerSpec parse_learner(const std::string& text)
{
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    LearnerSpec spec;
    if (kind == "logistic") spec.kind = LearnerKind::logistic;
    else if (kind == "linear") spec.kind = LearnerKind::linear;
    else if (kind == "boosted-stumps" || kind == "stumps") spec.kind = LearnerKind::boosted_stumps;
    else if (kind == "knn") spec.kind = LearnerKind::knn;
    else throw ArgumentError("unknown learner '" + kind + "'");

    if (colon != std::string::npos) {
        std::istringstream params(text.substr(colon + 1));
        std::string item;
        while (std::getline(params, item, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw ArgumentError("learner parameter '" + item + "' is not key=value");
            const std::string key = item.substr(0, eq);
            const std::string value = item.substr(eq + 1);
            try {
                if (key == "rounds") spec.rounds = std::stoi(value);
                else if (key == "lr") spec.learning_rate = std::stod(value);
                else if (key == "min_leaf") spec.min_leaf = std::stoi(value);
                else if (key == "k") spec.k = std::stoi(value);
                else if (key == "ridge") spec.ridge = std::stod(value);
                else if (key == "clip") {
                    spec.clip = true;
                    spec.clip_epsilon = std::stod(value);
                } else throw ArgumentError("unknown learner parameter '" + key + "'");
            } catch (const std::logic_error&) {
                throw ArgumentError("invalid value for learner parameter '" + key + "': " + value);
            }
        }
    }
    spec.validate();
    return spec;
}

ProbabilityModel::ProbabilityModel(std::shared_ptr<const detail::Predictor> impl, Index dim, bool clip, double eps)
    : impl_(std::move(impl)), dim_(dim), clip_(clip), eps_(eps)
{
}

double ProbabilityModel::predict(CRef<Vector> features) const
{
    if (features.size() != dim_) throw ArgumentError("probability model: feature dimension mismatch");
    double p = std::clamp(impl_->predict(features), 0.0, 1.0);
    if (clip_) p = std::clamp(p, eps_, 1.0 - eps_);
    return p;
}

Vector ProbabilityModel::predict_rows(CRef<Matrix> features) const
{
    Vector out(features.rows());
    for (Index i = 0; i < features.rows(); ++i) out(i) = predict(features.row(i).transpose());
    return out;
}

RegressionModel::RegressionModel(std::shared_ptr<const detail::Predictor> impl, Index dim)
    : impl_(std::move(impl)), dim_(dim)
{
}

double RegressionModel::predict(CRef<Vector> features) const
{
    if (features.size() != dim_) throw ArgumentError("regression model: feature dimension mismatch");
    return impl_->predict(features);
}

Vector RegressionModel::predict_rows(CRef<Matrix> features) const
{
    Vector out(features.rows());
    for (Index i = 0; i < features.rows(); ++i) out(i) = predict(features.row(i).transpose());
    return out;
}

Vector logistic_coefficients(CRef<Matrix> features, CRef<Vector> labels, double ridge)
{
    const Index n = features.rows();
    const Index d = features.cols();
    Matrix z(n, d + 1);
    z.col(0).setOnes();
    z.rightCols(d) = features;

    Vector penalty = Vector::Constant(d + 1, ridge);
    penalty(0) = 0.0;
    auto objective = [&](const Vector& beta) {
        const Vector eta = z * beta;
        double ll = 0.0;
        for (Index i = 0; i < n; ++i) ll += labels(i) * eta(i) - softplus(eta(i));
        return ll - 0.5 * beta.dot(penalty.cwiseProduct(beta));
    };

    const double mean = std::clamp(labels.mean(), 1e-6, 1.0 - 1e-6);
    Vector beta = Vector::Zero(d + 1);
    beta(0) = std::log(mean / (1.0 - mean));
    double current = objective(beta);
    for (int iter = 0; iter < 100; ++iter) {
        const Vector eta = z * beta;
        Vector p(n), w(n);
        for (Index i = 0; i < n; ++i) {
            p(i) = expit(eta(i));
            w(i) = p(i) * (1.0 - p(i));
        }
        const Vector grad = z.transpose() * (labels - p) - penalty.cwiseProduct(beta);
        if (grad.norm() / static_cast<double>(n) < 1e-8) break;
        Matrix hessian = z.transpose() * w.asDiagonal() * z;
        hessian.diagonal() += penalty;
        hessian.diagonal().array() += 1e-12 * (1.0 + hessian.diagonal().cwiseAbs().maxCoeff());
        const Vector step = hessian.ldlt().solve(grad);
        double scale = 1.0;
        Vector candidate = beta + step;
        double value = objective(candidate);
        while (!(value >= current) && scale > 1e-10) {
            scale *= 0.5;
            candidate = beta + scale * step;
            value = objective(candidate);
        }
        if (!(value >= current)) break;
        beta = candidate;
        current = value;
    }
    return beta;
}

ProbabilityModel fit_probability(CRef<Matrix> features, CRef<Vector> labels, const LearnerSpec& spec,
                                 const OracleQuery& query)
{
    spec.validate();
    const Index d = features.cols();
    if (spec.kind == LearnerKind::oracle)
        return ProbabilityModel(std::make_shared<OraclePredictor>(spec.oracle, query), d, spec.clip, spec.clip_epsilon);

    check_shapes(features, labels, 2, "fit_probability");
    for (Index i = 0; i < labels.size(); ++i)
        if (labels(i) != 0.0 && labels(i) != 1.0) throw ArgumentError("fit_probability: labels must be 0 or 1");

    const double mean = labels.mean();
    if (mean == 0.0 || mean == 1.0)
        return ProbabilityModel(std::make_shared<ConstantPredictor>(mean), d, spec.clip, spec.clip_epsilon);

    std::shared_ptr<const detail::Predictor> impl;
    switch (spec.kind) {
    case LearnerKind::logistic: {
        const Vector beta = logistic_coefficients(features, labels, spec.ridge);
        impl = std::make_shared<AffinePredictor>(beta(0), beta.tail(d), true);
        break;
    }
    case LearnerKind::linear: impl = fit_linear(features, labels, spec.ridge); break;
    case LearnerKind::boosted_stumps: impl = fit_stumps(features, labels, spec, true); break;
    case LearnerKind::knn: impl = std::make_shared<KnnPredictor>(features, labels, spec.k); break;
    case LearnerKind::oracle: break;
    }
    return ProbabilityModel(std::move(impl), d, spec.clip, spec.clip_epsilon);
}

RegressionModel fit_regression(CRef<Matrix> features, CRef<Vector> targets, const LearnerSpec& spec,
                               const OracleQuery& query)
{
    spec.validate();
    const Index d = features.cols();
    if (spec.kind == LearnerKind::oracle) return RegressionModel(std::make_shared<OraclePredictor>(spec.oracle, query), d);

    check_shapes(features, targets, 1, "fit_regression");
    std::shared_ptr<const detail::Predictor> impl;
    switch (spec.kind) {
    case LearnerKind::linear: impl = fit_linear(features, targets, spec.ridge); break;
    case LearnerKind::boosted_stumps: impl = fit_stumps(features, targets, spec, false); break;
    case LearnerKind::knn: impl = std::make_shared<KnnPredictor>(features, targets, spec.k); break;
    case LearnerKind::logistic: throw ArgumentError("logistic learner cannot fit a regression");
    case LearnerKind::oracle: break;
    }
    return RegressionModel(std::move(impl), d);
}

RegressionModel constant_regression(double value, Index dim)
{
    return RegressionModel(std::make_shared<ConstantPredictor>(value), dim);
}

Matrix select_rows(const Matrix& features, std::span<const Index> rows)
{
    Matrix out(static_cast<Index>(rows.size()), features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = features.row(rows[r]);
    return out;
}

Vector select_rows(const Vector& values, std::span<const Index> rows)
{
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = values(rows[r]);
    return out;
}

NuisanceFit crossfit_nuisances(const PointData& data, const FoldAssignment& folds, const LearnerSpec& spec_pi,
                               const LearnerSpec& spec_mu)
{
    const Index n = data.size();
    if (folds.size() != n) throw ArgumentError("fold assignment does not cover the data");
    spec_pi.validate();
    spec_mu.validate();

    NuisanceFit fit;
    fit.pi_hat.resize(n);
    fit.mu1_hat.resize(n);
    fit.mu0_hat.resize(n);
    fit.folds = folds;
    std::vector<char> treated_fallback(static_cast<std::size_t>(folds.k), 0);
    std::vector<char> control_fallback(static_cast<std::size_t>(folds.k), 0);

#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < folds.k; ++k) {
        const std::vector<Index> train = folds.complement(k);
        const std::vector<Index> test = folds.members(k);
        const Matrix x_train = select_rows(data.x, train);
        const Vector a_train = select_rows(data.a, train);
        const Vector y_train = select_rows(data.y, train);
        const Matrix x_test = select_rows(data.x, test);

        const ProbabilityModel pi_model = fit_probability(x_train, a_train, spec_pi);

        auto arm_predictions = [&](int arm, char& fallback) {
            if (spec_mu.kind == LearnerKind::oracle)
                return fit_regression(x_train, y_train, spec_mu, OracleQuery{1, arm}).predict_rows(x_test);
            std::vector<Index> arm_rows;
            for (Index r = 0; r < a_train.size(); ++r)
                if (a_train(r) == arm) arm_rows.push_back(r);
            if (arm_rows.empty()) {
                fallback = 1;
                return Vector(Vector::Constant(x_test.rows(), y_train.mean()));
            }
            return fit_regression(select_rows(x_train, arm_rows), select_rows(y_train, arm_rows), spec_mu,
                                  OracleQuery{1, arm})
                .predict_rows(x_test);
        };
        const Vector pi_test = pi_model.predict_rows(x_test);
        const Vector mu1_test = arm_predictions(1, treated_fallback[static_cast<std::size_t>(k)]);
        const Vector mu0_test = arm_predictions(0, control_fallback[static_cast<std::size_t>(k)]);
        for (std::size_t r = 0; r < test.size(); ++r) {
            const Index i = test[r];
            fit.pi_hat(i) = pi_test(static_cast<Index>(r));
            fit.mu1_hat(i) = mu1_test(static_cast<Index>(r));
            fit.mu0_hat(i) = mu0_test(static_cast<Index>(r));
        }
    }
    for (int k = 0; k < folds.k; ++k) {
        if (treated_fallback[static_cast<std::size_t>(k)]) fit.diagnostics.empty_treated_folds.push_back(k);
        if (control_fallback[static_cast<std::size_t>(k)]) fit.diagnostics.empty_control_folds.push_back(k);
    }
    return fit;
}

} // namespace ipsi
