#include "surfmet/numerics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace surfmet::num {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

// Initial guess for the normal quantile (Acklam's rational approximation),
// refined below against the CDF.
double normal_quantile_guess(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double q = p - 0.5;
    double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Continued fraction for the regularized incomplete beta (Lentz).
double incbeta_cf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double eps = 1e-15;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 400; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double normal_cdf(double z) {
    if (!std::isfinite(z)) {
        if (std::isnan(z)) throw std::domain_error("normal_cdf: NaN argument");
        return z > 0 ? 1.0 : 0.0;
    }
    return 0.5 * std::erfc(-z / kSqrt2);
}

double normal_pdf(double z) {
    return 0.3989422804014327 * std::exp(-0.5 * z * z);
}

double normal_quantile(double p, const ToleranceConfig& tol) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
    double x = normal_quantile_guess(p);
    // Newton refinement inside a maintained bracket.
    double lo = x - 1.0, hi = x + 1.0;
    while (normal_cdf(lo) > p) lo -= 1.0;
    while (normal_cdf(hi) < p) hi += 1.0;
    for (int it = 0; it < tol.max_iter; ++it) {
        double f = normal_cdf(x) - p;
        if (std::abs(f) <= tol.abs_tol) break;
        if (f > 0.0) hi = x; else lo = x;
        double deriv = normal_pdf(x);
        double step = deriv > 0.0 ? f / deriv : 0.0;
        double next = x - step;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return x;
}

double incbeta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw std::domain_error("incbeta: non-positive shape");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * incbeta_cf(a, b, x) / a;
    return 1.0 - front * incbeta_cf(b, a, 1.0 - x) / b;
}

double gamma_p(double a, double x) {
    if (a <= 0.0) throw std::domain_error("gamma_p: a <= 0");
    if (x < 0.0) throw std::domain_error("gamma_p: x < 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
    if (a <= 0.0) throw std::domain_error("gamma_q: a <= 0");
    if (x < 0.0) throw std::domain_error("gamma_q: x < 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double student_t_cdf(double t, double dof) {
    if (!(dof >= 1.0)) throw std::domain_error("student_t_cdf: dof < 1");
    if (t == 0.0) return 0.5;
    double x = dof / (dof + t * t);
    double tail = 0.5 * incbeta(0.5 * dof, 0.5, x);
    return t > 0.0 ? 1.0 - tail : tail;
}

double t_quantile(double p, double dof, const ToleranceConfig& tol) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("t_quantile: p outside (0,1)");
    if (!(dof >= 1.0)) throw std::domain_error("t_quantile: dof < 1");
    if (p == 0.5) return 0.0;
    // expand a bracket around the normal-limit guess, then bisect/Newton
    double x = normal_quantile(p, tol);
    double w = 1.0 + 8.0 / dof;
    double lo = x * w - 1.0, hi = x * w + 1.0;
    int guard = 0;
    while (student_t_cdf(lo, dof) > p && guard++ < 200) lo -= std::max(1.0, std::abs(lo));
    guard = 0;
    while (student_t_cdf(hi, dof) < p && guard++ < 200) hi += std::max(1.0, std::abs(hi));
    x = 0.5 * (lo + hi);
    for (int it = 0; it < tol.max_iter; ++it) {
        double f = student_t_cdf(x, dof) - p;
        if (std::abs(f) <= tol.abs_tol) break;
        if (f > 0.0) hi = x; else lo = x;
        // density of the t distribution at x
        double logpdf = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                        0.5 * std::log(dof * 3.141592653589793) -
                        0.5 * (dof + 1.0) * std::log1p(x * x / dof);
        double deriv = std::exp(logpdf);
        double next = deriv > 0.0 ? x - f / deriv : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return x;
}

double f_sf(double f, double dof1, double dof2) {
    if (f < 0.0) throw std::domain_error("f_sf: negative F");
    if (!(dof1 >= 1.0) || !(dof2 >= 1.0)) throw std::domain_error("f_sf: dof < 1");
    if (f == 0.0) return 1.0;
    return incbeta(0.5 * dof2, 0.5 * dof1, dof2 / (dof2 + dof1 * f));
}

double chi2_sf(double x, double dof) {
    if (x < 0.0) throw std::domain_error("chi2_sf: negative statistic");
    if (!(dof >= 1.0)) throw std::domain_error("chi2_sf: dof < 1");
    return gamma_q(0.5 * dof, 0.5 * x);
}

}  // namespace surfmet::num
