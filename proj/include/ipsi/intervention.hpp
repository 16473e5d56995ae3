#pragma once

#include "ipsi/types.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace ipsi {

// Ordered set of odds multipliers, strictly increasing, each in (0, inf).
class DeltaGrid {
public:
    DeltaGrid() = default;
    explicit DeltaGrid(std::vector<double> values);

    static DeltaGrid log_spaced(double lo, double hi, int count);
    static DeltaGrid linear_spaced(double lo, double hi, int count);
    // CLI default: 50 log-spaced points on [0.2, 5].
    static DeltaGrid standard();

    Index size() const { return static_cast<Index>(values_.size()); }
    double operator[](Index j) const { return values_[static_cast<std::size_t>(j)]; }
    const std::vector<double>& values() const { return values_; }
    // Position of an exact grid value, or -1.
    Index find(double delta) const;

private:
    std::vector<double> values_;
};

namespace detail {
void check_delta(double delta);
void check_probability(double pi);
} // namespace detail

// Denominator of every incremental weight: delta*pi + (1 - pi). Exactly 1 at
// delta = 1 in floating point, and bounded below by min(1, delta).
template <typename Scalar>
inline Scalar shift_denominator(Scalar pi, Scalar delta)
{
    return delta * pi + (Scalar(1) - pi);
}

// q(pi; delta) = delta*pi / (delta*pi + 1 - pi): the propensity after
// multiplying the odds of treatment by delta.
template <typename Scalar>
inline Scalar shift_propensity(Scalar pi, Scalar delta)
{
    detail::check_delta(static_cast<double>(delta));
    detail::check_probability(static_cast<double>(pi));
    if (pi == Scalar(0) || pi == Scalar(1) || delta == Scalar(1)) return pi;
    return delta * pi / shift_denominator(pi, delta);
}

// (delta*a + 1 - a) / (delta*pi + 1 - pi).
template <typename Scalar>
inline Scalar ipw_factor(int a, Scalar pi, Scalar delta)
{
    detail::check_delta(static_cast<double>(delta));
    detail::check_probability(static_cast<double>(pi));
    if (a != 0 && a != 1) throw ArgumentError("treatment must be 0 or 1");
    const Scalar numer = a == 1 ? delta : Scalar(1);
    return numer / shift_denominator(pi, delta);
}

// Array forms for expression use; no argument checks beyond what Eigen does.
template <typename Derived>
inline auto shifted_propensities(const Eigen::ArrayBase<Derived>& pi, double delta)
{
    return (delta * pi) / (delta * pi + (1.0 - pi));
}

template <typename DerivedA, typename DerivedP>
inline auto ipw_factors(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedP>& pi, double delta)
{
    return (delta * a + (1.0 - a)) / (delta * pi + (1.0 - pi));
}

// Product of per-period ipw factors along one trajectory.
double trajectory_weight(std::span<const int> treatments, std::span<const double> propensities, double delta);

} // namespace ipsi
