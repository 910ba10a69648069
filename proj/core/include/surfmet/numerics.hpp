#pragma once

#include <cstddef>

// Distribution functions used across the statistical modules. Quantiles are
// solved by bracketed root-finding on the CDF so the accuracy contract is
// uniform in the parameters (the effective dof from Welch-Satterthwaite is
// generally non-integer, so t_quantile takes a real-valued dof).

namespace surfmet::num {

struct ToleranceConfig {
    double abs_tol = 1e-10;
    int max_iter = 200;
};

double normal_cdf(double z);
double normal_pdf(double z);
double normal_quantile(double p, const ToleranceConfig& tol = {});

// Regularized incomplete gamma (lower P, upper Q) and beta functions.
double gamma_p(double a, double x);
double gamma_q(double a, double x);
double incbeta(double a, double b, double x);

double student_t_cdf(double t, double dof);
double t_quantile(double p, double dof, const ToleranceConfig& tol = {});

double f_sf(double f, double dof1, double dof2);
double chi2_sf(double x, double dof);

}  // namespace surfmet::num
