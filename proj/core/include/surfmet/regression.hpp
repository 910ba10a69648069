#pragma once

#include <span>
#include <vector>

#include "surfmet/types.hpp"

// Least-squares systematics models: the cross-instrument through-origin fit
// and the polynomial time-sequence fits.

namespace surfmet::regress {

// x_OPT = q * x_CI. sigma_q = eps_Rep / sqrt(sum x^2); R^2 uses the
// uncentered total sum of squares (a no-intercept model has no meaningful
// centered R^2).
RegressionFit fit_through_origin(const std::vector<PairedObservation>& pairs);

// Ordinary least squares of y on powers of (t - mean(t)), order 1 or 2.
// Coefficient sds come from eps^2 * (X^T X)^-1.
RegressionFit fit_poly(std::span<const double> t, std::span<const double> y, int order);

struct TrendLine {
    double slope = 0.0;
    double intercept = 0.0;
    bool trend_detected = false;  // |slope| exceeds twice its standard error
};

// First-order trend of the fit residuals against the sequence index; a slope
// indistinguishable from zero signals an effective correction.
TrendLine residual_trend(const RegressionFit& fit);

}  // namespace surfmet::regress
