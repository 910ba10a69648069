#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "surfmet/screening.hpp"
#include "surfmet/types.hpp"

// Kernel density estimation and decomposition of an experimental distribution
// into a mixture of normal kernels by minimising the chi-square statistic of
// the mixture against the sample histogram.

namespace surfmet::mix {

struct KernelDistribution {
    std::vector<double> grid;     // evaluation abscissae
    std::vector<double> density;  // same length, trapezoid-normalised to 1
    double bandwidth = 0.0;
};

// Gaussian KDE with the Silverman bandwidth rule on a grid spanning
// [min - 3h, max + 3h].
KernelDistribution kernel_distribution(std::span<const double> values,
                                       std::size_t grid_points = 512);

struct MixtureConfig {
    int k = 2;
    int restarts = 32;           // start 0 is quantile-spaced, the rest seeded
    std::uint64_t seed = 12345;
    std::size_t bin_count = 0;   // 0 = Sturges rule
    int max_iterations = 2000;   // per Nelder-Mead run
    double sigma_floor_factor = 0.25;  // sigma >= factor * bin width
    double pool_min_count = 1.0;  // adjacent bins merge until this many observations
};

// Multi-start Nelder-Mead minimisation of
//   chi2 = sum_bins (O_b - E_b)^2 / E_b,
// E_b from the mixture CDF at the histogram edges. Adjacent empty bins are
// pooled once, from the observed counts, so the objective keeps a fixed
// partition for every candidate. Weights live on the simplex via logits;
// sigmas are boxed to [floor, sample range]. Deterministic for a given seed.
MixtureModel fit_mixture(std::span<const double> values, const MixtureConfig& cfg);

// chi2 of given kernels against the histogram of `values` (the objective the
// fit minimises, exposed for self-consistency checks).
double mixture_chi2(std::span<const double> values, const std::vector<MixtureKernel>& kernels,
                    std::size_t bin_count = 0);

struct KernelAssignment {
    std::size_t kernel = 0;
    std::string level;       // "unidentified" when no level is close
    bool tie = false;        // two levels equally close; reported, not broken
    double subgroup_mean = 0.0;
};

// Matches each kernel to the factor level whose sub-group mean lies nearest
// to the kernel mean.
std::vector<KernelAssignment> assign_kernels_to_factors(
    const MixtureModel& model, const std::vector<MeasurementRecord>& records,
    const std::string& factor);

}  // namespace surfmet::mix
