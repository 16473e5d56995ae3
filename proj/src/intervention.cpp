#include "ipsi/intervention.hpp"

#include <cmath>

namespace ipsi {

namespace detail {

void check_delta(double delta)
{
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ArgumentError("delta must be a finite positive number");
}

void check_probability(double pi)
{
    if (!(pi >= 0.0 && pi <= 1.0)) throw ArgumentError("propensity must lie in [0, 1]");
}

} // namespace detail

DeltaGrid::DeltaGrid(std::vector<double> values) : values_(std::move(values))
{
    if (values_.empty()) throw ArgumentError("delta grid must be non-empty");
    for (std::size_t j = 0; j < values_.size(); ++j) {
        detail::check_delta(values_[j]);
        if (j > 0 && !(values_[j] > values_[j - 1])) throw ArgumentError("delta grid must be strictly increasing");
    }
}

DeltaGrid DeltaGrid::log_spaced(double lo, double hi, int count)
{
    detail::check_delta(lo);
    detail::check_delta(hi);
    if (count < 1) throw ArgumentError("grid needs at least one point");
    if (count == 1) return DeltaGrid({lo});
    if (!(hi > lo)) throw ArgumentError("grid maximum must exceed minimum");
    std::vector<double> v(static_cast<std::size_t>(count));
    const double step = (std::log(hi) - std::log(lo)) / (count - 1);
    for (int j = 0; j < count; ++j) {
        double d = std::exp(std::log(lo) + step * j);
        // Symmetric grids hit delta = 1 only up to rounding; make it exact.
        if (std::abs(d - 1.0) < 1e-12) d = 1.0;
        v[static_cast<std::size_t>(j)] = d;
    }
    v.front() = lo;
    v.back() = hi;
    return DeltaGrid(std::move(v));
}

DeltaGrid DeltaGrid::linear_spaced(double lo, double hi, int count)
{
    detail::check_delta(lo);
    detail::check_delta(hi);
    if (count < 1) throw ArgumentError("grid needs at least one point");
    if (count == 1) return DeltaGrid({lo});
    if (!(hi > lo)) throw ArgumentError("grid maximum must exceed minimum");
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) v[static_cast<std::size_t>(j)] = lo + (hi - lo) * j / (count - 1);
    v.back() = hi;
    return DeltaGrid(std::move(v));
}

DeltaGrid DeltaGrid::standard()
{
    return log_spaced(0.2, 5.0, 50);
}

Index DeltaGrid::find(double delta) const
{
    for (std::size_t j = 0; j < values_.size(); ++j)
        if (values_[j] == delta) return static_cast<Index>(j);
    return -1;
}

double trajectory_weight(std::span<const int> treatments, std::span<const double> propensities, double delta)
{
    if (treatments.size() != propensities.size())
        throw ArgumentError("trajectory_weight: treatments and propensities differ in length");
    double w = 1.0;
    for (std::size_t t = 0; t < treatments.size(); ++t) w *= ipw_factor(treatments[t], propensities[t], delta);
    return w;
}

} // namespace ipsi
