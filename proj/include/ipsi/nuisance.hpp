#pragma once

#include "ipsi/data.hpp"
#include "ipsi/types.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace ipsi {

// Context handed to an oracle learner: which nuisance is being asked for.
// t is 1-based; arm is -1 for propensity queries; delta is NaN when the
// nuisance does not depend on the shift.
struct OracleQuery {
    int t = 1;
    int arm = -1;
    double delta = std::numeric_limits<double>::quiet_NaN();
};

using OracleFn = std::function<double(CRef<Vector> features, const OracleQuery& query)>;

enum class LearnerKind { logistic, linear, boosted_stumps, knn, oracle };

struct LearnerSpec {
    LearnerKind kind = LearnerKind::boosted_stumps;
    double learning_rate = 0.1;
    int rounds = 200;
    int min_leaf = 20;
    int k = 25;
    double ridge = 1e-8;
    bool clip = false;
    double clip_epsilon = 0.01;
    OracleFn oracle;

    static LearnerSpec logistic();
    static LearnerSpec linear();
    static LearnerSpec boosted_stumps(int rounds = 200, double learning_rate = 0.1);
    static LearnerSpec knn(int k);
    static LearnerSpec make_oracle(OracleFn fn);

    // Throws ArgumentError when a hyperparameter is out of range.
    void validate() const;
    std::string describe() const;
};

// Parses `kind[:key=value,...]`, e.g. `boosted-stumps:rounds=300,lr=0.05`.
// Recognised keys: rounds, lr, min_leaf, k, ridge, clip.
LearnerSpec parse_learner(const std::string& text);
std::string to_string(LearnerKind kind);

namespace detail {
struct Predictor {
    virtual ~Predictor() = default;
    virtual double predict(CRef<Vector> features) const = 0;
};
} // namespace detail

class ProbabilityModel {
public:
    ProbabilityModel() = default;
    ProbabilityModel(std::shared_ptr<const detail::Predictor> impl, Index dim, bool clip, double eps);

    double predict(CRef<Vector> features) const;
    Vector predict_rows(CRef<Matrix> features) const;
    Index dim() const { return dim_; }

private:
    std::shared_ptr<const detail::Predictor> impl_;
    Index dim_ = 0;
    bool clip_ = false;
    double eps_ = 0.0;
};

class RegressionModel {
public:
    RegressionModel() = default;
    RegressionModel(std::shared_ptr<const detail::Predictor> impl, Index dim);

    double predict(CRef<Vector> features) const;
    Vector predict_rows(CRef<Matrix> features) const;
    Index dim() const { return dim_; }

private:
    std::shared_ptr<const detail::Predictor> impl_;
    Index dim_ = 0;
};

ProbabilityModel fit_probability(CRef<Matrix> features, CRef<Vector> labels, const LearnerSpec& spec,
                                 const OracleQuery& query = {});
RegressionModel fit_regression(CRef<Matrix> features, CRef<Vector> targets, const LearnerSpec& spec,
                               const OracleQuery& query = {});

RegressionModel constant_regression(double value, Index dim);

// Coefficients of a logistic fit (intercept first); exposed for diagnostics
// and coefficient-recovery checks.
Vector logistic_coefficients(CRef<Matrix> features, CRef<Vector> labels, double ridge = 1e-8);

struct NuisanceDiagnostics {
    // Folds whose training complement had no treated (resp. control) units;
    // the corresponding outcome model fell back to the complement mean.
    std::vector<int> empty_treated_folds;
    std::vector<int> empty_control_folds;

    bool any() const { return !empty_treated_folds.empty() || !empty_control_folds.empty(); }
};

// Out-of-fold nuisance predictions for a single-time-point sample.
struct NuisanceFit {
    Vector pi_hat;
    Vector mu1_hat;
    Vector mu0_hat;
    FoldAssignment folds;
    NuisanceDiagnostics diagnostics;
};

NuisanceFit crossfit_nuisances(const PointData& data, const FoldAssignment& folds,
                               const LearnerSpec& spec_pi, const LearnerSpec& spec_mu);

// Rows of `features` / entries of `values` restricted to `rows`.
Matrix select_rows(const Matrix& features, std::span<const Index> rows);
Vector select_rows(const Vector& values, std::span<const Index> rows);

} // namespace ipsi
