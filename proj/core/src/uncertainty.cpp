#include "surfmet/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "surfmet/numerics.hpp"
#include "surfmet/regression.hpp"
#include "surfmet/screening.hpp"

namespace surfmet::unc {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

double coverage_k(double dof_eff) {
    if (!std::isfinite(dof_eff)) return num::normal_quantile(0.975);
    return num::t_quantile(0.975, std::max(dof_eff, 1.0));
}

}  // namespace

UncertaintyBudget combine(const std::vector<UncertaintyContributor>& contributors) {
    if (contributors.empty()) throw std::invalid_argument("combine: no contributors");
    double uc2 = 0.0;
    double denom = 0.0;
    for (const auto& c : contributors) {
        if (c.u < 0.0) throw std::invalid_argument("combine: negative standard uncertainty");
        if (!(c.dof >= 1.0))
            throw std::invalid_argument("combine: contributor dof < 1 (" + c.name + ")");
        const double uy = c.propagated();
        uc2 += uy * uy;
        if (std::isfinite(c.dof)) denom += uy * uy * uy * uy / c.dof;
    }
    if (uc2 <= 0.0) throw std::invalid_argument("combine: empty budget (all u = 0)");

    UncertaintyBudget b;
    b.contributors = contributors;
    b.u_combined = std::sqrt(uc2);
    b.dof_eff = denom > 0.0 ? uc2 * uc2 / denom : kInfDof;
    b.k = coverage_k(b.dof_eff);
    b.U = b.k * b.u_combined;
    return b;
}

UncertaintyContributor uniform_contributor(const std::string& name, double halfwidth,
                                           double sensitivity) {
    UncertaintyContributor c;
    c.name = name;
    c.u = halfwidth / kSqrt3;
    c.sensitivity = sensitivity;
    c.dof = kInfDof;
    c.distribution = DistributionKind::Uniform;
    return c;
}

UncertaintyContributor ci_reference_uncertainty(const MaterialMeasureCalibration& cal) {
    cal.validate();
    if (cal.n_input < 2)
        throw std::invalid_argument("ci_reference_uncertainty: n_input must exceed 1");
    const double k_cal =
        cal.coverage_k ? *cal.coverage_k
                       : num::t_quantile(0.975, static_cast<double>(cal.n_input - 1));
    UncertaintyContributor c;
    c.name = "u_CI";
    c.u = cal.expanded_u / k_cal * std::sqrt(static_cast<double>(cal.n_input));
    c.sensitivity = 1.0;
    c.dof = static_cast<double>(cal.n_input - 1);
    return c;
}

UncertaintyBudget eval_comparison(const RegressionFit& fit,
                                  const MaterialMeasureCalibration& reference, double x_ci,
                                  double resolution_um) {
    if (fit.kind != FitKind::ThroughOrigin)
        throw std::invalid_argument("eval_comparison: expects a through-origin fit");
    auto u_ci = ci_reference_uncertainty(reference);
    u_ci.sensitivity = fit.coeffs.at(0);

    UncertaintyContributor slope{"u_slope", fit.coeff_sd.at(0), x_ci,
                                 static_cast<double>(fit.dof), DistributionKind::Normal};
    UncertaintyContributor repr{"u_repr_fit", fit.reproducibility, 1.0,
                                static_cast<double>(fit.dof), DistributionKind::Normal};
    return combine({u_ci, slope, repr, uniform_contributor("u_res", resolution_um)});
}

std::vector<double> corrected_series(const RegressionFit& fit, std::span<const double> t,
                                     std::span<const double> y, double x_ci) {
    if (t.size() != y.size())
        throw std::invalid_argument("corrected_series: size mismatch");
    if (t.size() != fit.residuals.size())
        throw std::invalid_argument("corrected_series: fit was made on a different sample");
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = x_ci + y[i] - fit.predict(t[i]);
    return out;
}

SubgroupResult eval_time_sequence_subgroup(const RegressionFit& fit, std::span<const double> t,
                                           std::span<const double> y,
                                           std::span<const std::size_t> subgroup_indices,
                                           const std::string& label,
                                           const MaterialMeasureCalibration& reference,
                                           double resolution_um) {
    if (subgroup_indices.empty())
        throw std::invalid_argument("eval_time_sequence_subgroup: empty sub-group");
    auto corrected = corrected_series(fit, t, y, reference.value);

    SubgroupResult res;
    res.label = label;
    double sbar = 0.0, s2bar = 0.0;
    for (auto i : subgroup_indices) {
        if (i >= t.size())
            throw std::invalid_argument("eval_time_sequence_subgroup: index out of range");
        res.value += corrected[i];
        double s = t[i] - fit.center;
        sbar += s;
        s2bar += s * s;
    }
    const double m = static_cast<double>(subgroup_indices.size());
    res.value /= m;
    sbar /= m;
    s2bar /= m;

    std::vector<UncertaintyContributor> cs;
    cs.push_back(ci_reference_uncertainty(reference));
    const double fdof = static_cast<double>(fit.dof);
    cs.push_back({"u_intercept", fit.coeff_sd.at(0), 1.0, fdof, DistributionKind::Normal});
    cs.push_back({"u_slope", fit.coeff_sd.at(1), std::abs(sbar), fdof, DistributionKind::Normal});
    if (fit.coeffs.size() > 2)
        cs.push_back({"u_quadratic", fit.coeff_sd.at(2), s2bar, fdof, DistributionKind::Normal});
    cs.push_back({"u_repr_fit", fit.reproducibility, 1.0, fdof, DistributionKind::Normal});
    cs.push_back(uniform_contributor("u_res", resolution_um));
    res.budget = combine(cs);
    return res;
}

SubstitutionResult eval_substitution(const RegressionFit& fit_gauge,
                                     const RegressionFit& fit_opt,
                                     const MaterialMeasureCalibration& cal,
                                     std::span<const double> t_s) {
    if (fit_gauge.kind != FitKind::ThroughOrigin || fit_opt.kind != FitKind::ThroughOrigin)
        throw std::invalid_argument(
            "eval_substitution: both regressions must be first-order through origin in t");
    const double qg = fit_gauge.coeffs.at(0);
    const double po = fit_opt.coeffs.at(0);

    SubstitutionResult out;
    out.corrected.reserve(t_s.size());
    double tbar = 0.0;
    for (double t : t_s) {
        const double gauge = qg * t;
        if (gauge <= 0.0)
            throw std::invalid_argument(
                "eval_substitution: gauge regression is non-positive at a requested index");
        out.corrected.push_back(cal.value * (po * t) / gauge);
        tbar += t;
    }
    tbar /= static_cast<double>(t_s.size());
    const double y0 = cal.value * po / qg;  // quotient is index-free for through-origin fits

    // first-order sensitivities of y = x_cal * (p t)/(q t) at the mean index.
    // The certificate enters as U_ref_cal / k_cal: the calibrated value is used
    // directly, so no spreading over the certificate repeats applies here.
    cal.validate();
    const double k_cal =
        cal.coverage_k ? *cal.coverage_k
                       : num::t_quantile(0.975, std::max(cal.n_input - 1, 1));
    UncertaintyContributor u_cal{"u_ref_cal", cal.expanded_u / k_cal, po / qg,
                                 static_cast<double>(std::max(cal.n_input - 1, 1)),
                                 DistributionKind::Normal};
    std::vector<UncertaintyContributor> cs;
    cs.push_back(u_cal);
    cs.push_back({"u_p_opt", fit_opt.coeff_sd.at(0), std::abs(cal.value / qg),
                  static_cast<double>(fit_opt.dof), DistributionKind::Normal});
    cs.push_back({"u_q_gauge", fit_gauge.coeff_sd.at(0), std::abs(y0 / qg),
                  static_cast<double>(fit_gauge.dof), DistributionKind::Normal});
    cs.push_back({"u_repr_opt", fit_opt.reproducibility,
                  std::abs(cal.value / (qg * tbar)), static_cast<double>(fit_opt.dof),
                  DistributionKind::Normal});
    cs.push_back({"u_repr_gauge", fit_gauge.reproducibility,
                  std::abs(y0 / (qg * tbar)), static_cast<double>(fit_gauge.dof),
                  DistributionKind::Normal});
    out.budget = combine(cs);
    return out;
}

namespace {

struct AreaStats {
    std::vector<double> means;
    double mean_of_means = 0.0;
    double pooled_within_sd = 0.0;
    double mean_max_abs_dev = 0.0;
    long within_dof = 0;
    double avg_repeats = 0.0;
};

AreaStats area_stats(const std::vector<std::vector<double>>& groups) {
    if (groups.empty())
        throw std::invalid_argument("characterization: no sampling areas");
    AreaStats st;
    double ssw = 0.0;
    std::size_t total = 0;
    for (const auto& g : groups) {
        if (g.size() < 2)
            throw std::invalid_argument("characterization: area group with fewer than 2 repeats");
        double m = screen::sample_mean(g);
        st.means.push_back(m);
        double maxdev = 0.0;
        for (double x : g) {
            ssw += (x - m) * (x - m);
            maxdev = std::max(maxdev, std::abs(x - m));
        }
        st.mean_max_abs_dev += maxdev;
        total += g.size();
    }
    const auto A = groups.size();
    st.mean_of_means = std::accumulate(st.means.begin(), st.means.end(), 0.0) /
                       static_cast<double>(A);
    st.within_dof = static_cast<long>(total - A);
    st.pooled_within_sd = std::sqrt(ssw / static_cast<double>(st.within_dof));
    st.mean_max_abs_dev /= static_cast<double>(A);
    st.avg_repeats = static_cast<double>(total) / static_cast<double>(A);
    return st;
}

}  // namespace

CharacterizationResult eval_characterization_corrected(const CharacterizationInput& in) {
    if (in.ci_repeats.empty())
        throw std::invalid_argument("characterization: no reference repeats");
    auto st = area_stats(in.area_groups);
    const double x_ci = screen::sample_mean(in.ci_repeats);
    const std::size_t total =
        std::accumulate(in.area_groups.begin(), in.area_groups.end(), std::size_t{0},
                        [](std::size_t a, const auto& g) { return a + g.size(); });

    CharacterizationResult res;
    res.q = st.mean_of_means / x_ci;
    res.corrected_value = st.mean_of_means;
    res.pooled_within_sd = st.pooled_within_sd;
    // slope uncertainty from the repeat-level scatter; the between-area spread
    // is real surface variation, not fit noise
    res.sigma_q = st.pooled_within_sd / (x_ci * std::sqrt(static_cast<double>(total)));

    auto u_ci = ci_reference_uncertainty(in.certificate);
    u_ci.sensitivity = res.q;
    const double wdof = static_cast<double>(st.within_dof);
    std::vector<UncertaintyContributor> cs;
    cs.push_back(u_ci);
    cs.push_back({"u_repea_opt", st.pooled_within_sd / std::sqrt(st.avg_repeats), 1.0, wdof,
                  DistributionKind::Normal});
    cs.push_back({"u_slope", res.sigma_q, x_ci, wdof, DistributionKind::Normal});
    cs.push_back({"u_repr_fit", st.pooled_within_sd, 1.0, wdof, DistributionKind::Normal});
    res.budget = combine(cs);
    return res;
}

CharacterizationResult eval_characterization_uncorrected(const CharacterizationInput& in) {
    if (in.ci_repeats.size() < 2)
        throw std::invalid_argument("characterization: needs at least 2 reference repeats");
    auto st = area_stats(in.area_groups);
    const double x_ci = screen::sample_mean(in.ci_repeats);

    CharacterizationResult res;
    res.q = 1.0;
    res.corrected_value = x_ci;  // y = x - (x_ave - x_ci) recentres onto the reference
    res.pooled_within_sd = st.pooled_within_sd;

    auto u_ci = ci_reference_uncertainty(in.certificate);
    const double wdof = static_cast<double>(st.within_dof);
    std::vector<UncertaintyContributor> cs;
    cs.push_back(u_ci);
    cs.push_back(uniform_contributor("u_repr", st.mean_max_abs_dev));
    cs.push_back({"u_repea_opt", st.pooled_within_sd / std::sqrt(st.avg_repeats), 1.0, wdof,
                  DistributionKind::Normal});
    cs.push_back({"u_repea_ci", screen::sample_sd(in.ci_repeats), 1.0,
                  static_cast<double>(in.ci_repeats.size() - 1), DistributionKind::Normal});
    res.budget = combine(cs);
    return res;
}

ResidualDiagnostics residual_randomization_report(const RegressionFit& fit) {
    if (fit.residuals.empty())
        throw std::invalid_argument("residual_randomization_report: no fitted residuals");
    ResidualDiagnostics d;
    const auto n = static_cast<double>(fit.residuals.size());
    for (double r : fit.residuals) d.mean += r;
    d.mean /= n;
    double ss = 0.0;
    for (double r : fit.residuals) ss += (r - d.mean) * (r - d.mean);
    d.sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    if (fit.residuals.size() >= 3) d.trend_slope = regress::residual_trend(fit).slope;
    d.nonzero_mean_flag = d.sd > 0.0 && std::abs(d.mean) > 2.0 * d.sd / std::sqrt(n);
    return d;
}

}  // namespace surfmet::unc
