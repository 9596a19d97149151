#pragma once

#include <span>

namespace drnets::stats {

double normal_cdf(double x);
double normal_pdf(double x);

/// Inverse standard normal CDF on (0, 1): rational approximation followed by a
/// Halley refinement step, accurate to about 1e-15 in the central region.
double normal_quantile(double p);

double mean(std::span<const double> xs);
/// Mean squared deviation from `center` (divides by n).
double mean_sq_dev(std::span<const double> xs, double center);
/// Standard error of the sample mean, using the n - 1 variance.
double standard_error(std::span<const double> xs);

/// Least-squares slope of y on x.
double ols_slope(std::span<const double> x, std::span<const double> y);

}  // namespace drnets::stats
