#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Shared domain types. The canonical internal length unit is micrometres;
// nanometre values appear only at I/O boundaries.

namespace surfmet {

inline constexpr double kInfDof = std::numeric_limits<double>::infinity();

enum class Instrument { FV, LSC, CSI, CI };
enum class Measurand { StepHeight, RmsSq, Sa };

std::string to_string(Instrument i);
std::string to_string(Measurand m);
Instrument instrument_from_string(const std::string& s);
Measurand measurand_from_string(const std::string& s);

// One extracted scalar value together with its factor labels. Missing factor
// levels (day, seq, magnification) stay unset and are reported as "unknown".
struct MeasurementRecord {
    double value_um = 0.0;
    Instrument instrument = Instrument::FV;
    std::optional<double> magnification;  // > 0 when present
    std::string area;
    std::optional<int> day;   // >= 1
    std::optional<int> seq;   // acquisition-sequence index, >= 1
    Measurand measurand = Measurand::StepHeight;

    void validate() const;
};

struct PairedObservation {
    double reference_um = 0.0;  // contact-instrument value
    double optical_um = 0.0;
    std::string area;
};

struct SampleStats {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double min = 0.0;
    double max = 0.0;
};

enum class FitKind { ThroughOrigin, Poly1, Poly2 };

// Least-squares fit result. Polynomial fits are parameterised about the
// sequence mean: x_regr(t) = a + b*(t - center) + c*(t - center)^2. The
// through-origin fit has a single coefficient q and center = 0.
struct RegressionFit {
    FitKind kind = FitKind::ThroughOrigin;
    std::vector<double> coeffs;
    std::vector<double> coeff_sd;
    std::vector<double> residuals;
    double reproducibility = 0.0;  // sd of residuals, dof-consistent divisor
    long dof = 0;
    double r2 = 0.0;
    double center = 0.0;

    std::size_t order() const { return coeffs.empty() ? 0 : coeffs.size() - 1; }
    double predict(double t) const;
};

enum class DistributionKind { Normal, Uniform };

struct UncertaintyContributor {
    std::string name;
    double u = 0.0;            // standard uncertainty (canonical unit)
    double sensitivity = 1.0;  // |c_j| applied when combining
    double dof = kInfDof;      // degrees of freedom, may be infinite
    DistributionKind distribution = DistributionKind::Normal;

    double propagated() const { return std::abs(sensitivity) * u; }
};

struct UncertaintyBudget {
    std::vector<UncertaintyContributor> contributors;
    double u_combined = 0.0;
    double dof_eff = kInfDof;
    double k = 0.0;   // coverage factor at 95 %
    double U = 0.0;   // expanded uncertainty
};

struct MixtureKernel {
    double mean = 0.0;
    double sd = 0.0;
    double weight = 0.0;
};

struct HistogramSpec {
    std::vector<double> edges;   // strictly increasing, size = bins + 1
    std::vector<long> counts;    // size = bins
    double normal_mean = 0.0;    // comparable theoretical normal overlay
    double normal_sd = 0.0;
    bool degenerate = false;     // zero-variance input collapsed to one bin

    std::size_t bins() const { return counts.size(); }
    double bin_width() const {
        return edges.size() > 1 ? edges[1] - edges[0] : 0.0;
    }
};

struct MixtureModel {
    std::vector<MixtureKernel> kernels;  // sorted by descending weight
    double chi2 = 0.0;
    HistogramSpec histogram;
    bool converged = true;
};

enum class SumOfSquares { Sequential, Adjusted };

struct AnovaRow {
    std::string factor;
    double ss = 0.0;
    long dof = 0;
    double ms = 0.0;
    double f = 0.0;
    double p = 1.0;
};

struct AnovaTable {
    std::vector<AnovaRow> rows;       // one per factor, then the residual row
    SumOfSquares ss_kind = SumOfSquares::Adjusted;
    double r2 = 0.0;
    std::vector<std::string> aliased; // factor levels absorbed by other terms
};

// Rectangular height map. Row-major, nx columns by ny rows; mask[i] == false
// marks a non-measured pixel which every statistic skips.
struct Micrograph {
    std::size_t nx = 0;
    std::size_t ny = 0;
    double pixel_dx_um = 1.0;
    double pixel_dy_um = 1.0;
    std::vector<double> heights;   // size nx*ny
    std::vector<std::uint8_t> mask;  // size nx*ny, 1 = valid

    double& at(std::size_t ix, std::size_t iy) { return heights[iy * nx + ix]; }
    double at(std::size_t ix, std::size_t iy) const { return heights[iy * nx + ix]; }
    bool valid(std::size_t ix, std::size_t iy) const { return mask[iy * nx + ix] != 0; }
    std::size_t valid_count() const;
    void validate() const;
};

Micrograph make_micrograph(std::size_t nx, std::size_t ny, double dx_um, double dy_um,
                           double fill = 0.0);

struct MaterialMeasureCalibration {
    double value = 0.0;             // x_ref_cal, canonical unit
    double expanded_u = 0.0;        // U_ref_cal from the certificate
    std::optional<double> coverage_k;  // certificate k; when absent it is
                                       // derived from the t-distribution with
                                       // n_input - 1 degrees of freedom
    int n_input = 1;                // certificate repeat count

    void validate() const;
};

// ---- session diagnostics ------------------------------------------------

struct ReplicateCount {
    Measurand measurand = Measurand::StepHeight;
    std::string area;
    std::size_t n = 0;
    bool tcl_warning = false;  // fewer than 10 replicates
};

struct SessionDiagnostics {
    std::vector<ReplicateCount> replicates;
    bool any_tcl_warning = false;
    bool unbalanced = false;  // unequal replicate counts across factor levels
    std::vector<std::string> notes;
};

// Reports replicate counts per (measurand, area) group, flags groups below
// the 10-replicate rule of thumb and unbalanced designs. Diagnostic only.
SessionDiagnostics validate_session(const std::vector<MeasurementRecord>& records);

}  // namespace surfmet
