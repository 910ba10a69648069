#include "surfmet/regression.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace surfmet::regress {

RegressionFit fit_through_origin(const std::vector<PairedObservation>& pairs) {
    if (pairs.size() < 2)
        throw std::invalid_argument("fit_through_origin: needs at least 2 pairs");
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& p : pairs) {
        sxx += p.reference_um * p.reference_um;
        sxy += p.reference_um * p.optical_um;
        syy += p.optical_um * p.optical_um;
    }
    if (sxx <= 0.0)
        throw std::invalid_argument("fit_through_origin: all reference values are zero");

    RegressionFit fit;
    fit.kind = FitKind::ThroughOrigin;
    const double q = sxy / sxx;
    fit.coeffs = {q};
    fit.residuals.reserve(pairs.size());
    double ssr = 0.0;
    for (const auto& p : pairs) {
        double r = p.optical_um - q * p.reference_um;
        fit.residuals.push_back(r);
        ssr += r * r;
    }
    fit.dof = static_cast<long>(pairs.size()) - 1;
    if (fit.dof < 1) throw std::invalid_argument("fit_through_origin: dof < 1");
    fit.reproducibility = std::sqrt(ssr / static_cast<double>(fit.dof));
    fit.coeff_sd = {fit.reproducibility / std::sqrt(sxx)};
    fit.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
    fit.center = 0.0;
    return fit;
}

RegressionFit fit_poly(std::span<const double> t, std::span<const double> y, int order) {
    if (order != 1 && order != 2)
        throw std::invalid_argument("fit_poly: order must be 1 or 2");
    if (t.size() != y.size())
        throw std::invalid_argument("fit_poly: size mismatch");
    const auto n = static_cast<long>(t.size());
    const long p = order + 1;
    if (n <= p)
        throw std::invalid_argument("fit_poly: needs more points than coefficients");

    double tbar = 0.0;
    for (double v : t) tbar += v;
    tbar /= static_cast<double>(n);
    double spread = 0.0;
    for (double v : t) spread += (v - tbar) * (v - tbar);
    if (spread <= 0.0)
        throw std::invalid_argument("fit_poly: sequence indices are collinear");

    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd Y(n);
    for (long i = 0; i < n; ++i) {
        double s = t[i] - tbar;
        X(i, 0) = 1.0;
        X(i, 1) = s;
        if (p > 2) X(i, 2) = s * s;
        Y(i) = y[i];
    }
    Eigen::VectorXd beta = X.colPivHouseholderQr().solve(Y);
    Eigen::VectorXd resid = Y - X * beta;

    RegressionFit fit;
    fit.kind = order == 1 ? FitKind::Poly1 : FitKind::Poly2;
    fit.center = tbar;
    fit.coeffs.assign(beta.data(), beta.data() + p);
    fit.residuals.assign(resid.data(), resid.data() + n);
    fit.dof = n - p;
    double ssr = resid.squaredNorm();
    fit.reproducibility = std::sqrt(ssr / static_cast<double>(fit.dof));
    Eigen::MatrixXd cov =
        (X.transpose() * X).inverse() * (fit.reproducibility * fit.reproducibility);
    fit.coeff_sd.resize(p);
    for (long j = 0; j < p; ++j) fit.coeff_sd[j] = std::sqrt(cov(j, j));
    double ybar = Y.mean();
    double sstot = (Y.array() - ybar).square().sum();
    fit.r2 = sstot > 0.0 ? 1.0 - ssr / sstot : 1.0;
    return fit;
}

TrendLine residual_trend(const RegressionFit& fit) {
    if (fit.residuals.size() < 3)
        throw std::invalid_argument("residual_trend: needs a fitted model with residuals");
    const auto n = static_cast<double>(fit.residuals.size());
    double tbar = (n + 1.0) / 2.0;
    double stt = 0.0, sty = 0.0, ybar = 0.0;
    for (double r : fit.residuals) ybar += r;
    ybar /= n;
    for (std::size_t i = 0; i < fit.residuals.size(); ++i) {
        double s = static_cast<double>(i + 1) - tbar;
        stt += s * s;
        sty += s * (fit.residuals[i] - ybar);
    }
    TrendLine out;
    out.slope = sty / stt;
    out.intercept = ybar - out.slope * 0.0;  // line about the centered index
    double ssr = 0.0;
    for (std::size_t i = 0; i < fit.residuals.size(); ++i) {
        double s = static_cast<double>(i + 1) - tbar;
        double e = fit.residuals[i] - (ybar + out.slope * s);
        ssr += e * e;
    }
    double se = n > 2 ? std::sqrt(ssr / (n - 2.0) / stt) : 0.0;
    out.trend_detected = se > 0.0 && std::abs(out.slope) > 2.0 * se;
    return out;
}

double RegressionFit_predict_impl(const RegressionFit&, double);

}  // namespace surfmet::regress

namespace surfmet {

double RegressionFit::predict(double t) const {
    if (kind == FitKind::ThroughOrigin) return coeffs.at(0) * t;
    double s = t - center;
    double v = coeffs.at(0) + coeffs.at(1) * s;
    if (coeffs.size() > 2) v += coeffs[2] * s * s;
    return v;
}

}  // namespace surfmet
