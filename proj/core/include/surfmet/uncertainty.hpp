#pragma once

#include <span>
#include <string>
#include <vector>

#include "surfmet/types.hpp"

// The metrological model equations, GUM combination of variances with
// Welch-Satterthwaite effective dof, and the expanded uncertainty at 95 %.

namespace surfmet::unc {

// u_c^2 = sum (c_j u_j)^2; nu_eff by Welch-Satterthwaite with infinite-dof
// terms contributing nothing to the denominator; k = t_0.975(nu_eff).
// Uniform contributors are expected already converted (u = halfwidth/sqrt(3)).
UncertaintyBudget combine(const std::vector<UncertaintyContributor>& contributors);

// halfwidth/sqrt(3) helper for uniformly distributed contributors
UncertaintyContributor uniform_contributor(const std::string& name, double halfwidth,
                                           double sensitivity = 1.0);

// Certificate accuracy per the appendix convention: the certificate value is
// an average over n_input repeats, so u_cal = U_cal / k_cal (k_cal from the
// t-distribution with n_input - 1 dof unless the certificate states one) is
// spread back over the input multiplicity: u_CI = u_cal * sqrt(n_input).
UncertaintyContributor ci_reference_uncertainty(const MaterialMeasureCalibration& cal);

// -- comparison against a calibrated reference (cross-instrument fit) -------
// y_OPT = q x_CI +- eps_Rep +- eps_res. Contributors: reference accuracy with
// sensitivity q, sigma_q with sensitivity x_CI, eps_Rep, and the uniform
// software resolution.
UncertaintyBudget eval_comparison(const RegressionFit& fit,
                                  const MaterialMeasureCalibration& reference, double x_ci,
                                  double resolution_um);

// -- time-sequence correction ------------------------------------------------
// y_i = x_ci + x_i - x_regr(t_i). The budget is evaluated for a sub-group of
// the sequence: coefficient sensitivities are taken at the sub-group's mean
// centered index (|mean s| for the slope, mean s^2 for the quadratic term).
struct SubgroupResult {
    std::string label;
    double value = 0.0;  // mean corrected value of the sub-group
    UncertaintyBudget budget;
};

std::vector<double> corrected_series(const RegressionFit& fit, std::span<const double> t,
                                     std::span<const double> y, double x_ci);

SubgroupResult eval_time_sequence_subgroup(const RegressionFit& fit, std::span<const double> t,
                                           std::span<const double> y,
                                           std::span<const std::size_t> subgroup_indices,
                                           const std::string& label,
                                           const MaterialMeasureCalibration& reference,
                                           double resolution_um);

// -- substitution method (calibrated material measure) ----------------------
// y = x_ref_cal * (p_opt t) / (q_gauge t); both fits must be first-order
// through origin in the sequence index.
struct SubstitutionResult {
    std::vector<double> corrected;
    UncertaintyBudget budget;
};

SubstitutionResult eval_substitution(const RegressionFit& fit_gauge,
                                     const RegressionFit& fit_opt,
                                     const MaterialMeasureCalibration& cal,
                                     std::span<const double> t_s);

// -- surface characterization ------------------------------------------------
// Repeated acquisitions grouped by sampling area. The corrected value is the
// mean of area means; between-area spread is surface unevenness, so the
// instrument-related contributors are built from the pooled within-area
// scatter.
struct CharacterizationInput {
    std::vector<std::vector<double>> area_groups;  // post-screening repeats
    std::vector<double> ci_repeats;
    MaterialMeasureCalibration certificate;  // value ignored; U_cal + n_input used
};

struct CharacterizationResult {
    double q = 0.0;                  // through-origin slope vs the CI mean
    double sigma_q = 0.0;
    double corrected_value = 0.0;    // mean of area means
    double pooled_within_sd = 0.0;
    UncertaintyBudget budget;
};

// corrected model: y = x + x_ave - q x_CI
CharacterizationResult eval_characterization_corrected(const CharacterizationInput& in);
// uncorrected model: y = x - (x_ave - x_CI); the reproducibility term is the
// per-area maximum deviation (averaged over areas), uniformly distributed.
CharacterizationResult eval_characterization_uncorrected(const CharacterizationInput& in);

// -- residual diagnostics ----------------------------------------------------
struct ResidualDiagnostics {
    double mean = 0.0;
    double sd = 0.0;
    double trend_slope = 0.0;
    bool nonzero_mean_flag = false;  // |mean| > 2 sd / sqrt(n)
};

ResidualDiagnostics residual_randomization_report(const RegressionFit& fit);

}  // namespace surfmet::unc
