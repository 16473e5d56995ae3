#pragma once

namespace ipsi {

double normal_cdf(double x);

// Inverse standard normal CDF. Acklam's rational approximation followed by one
// Halley refinement step; absolute error below 1e-12 on (1e-300, 1 - 1e-16).
double normal_quantile(double p);

} // namespace ipsi
