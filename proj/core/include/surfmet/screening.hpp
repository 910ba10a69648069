#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "surfmet/types.hpp"

// Pre-statistics conditioning: normalization to areal averages, Chauvenet
// exclusion, and the plot-data producers (histogram, NPP, box stats).

namespace surfmet::screen {

struct ChauvenetLimits {
    double lo = 0.0;
    double hi = 0.0;
};

struct ChauvenetResult {
    std::vector<double> kept;
    std::vector<std::pair<double, int>> excluded;  // value, iteration (1-based)
    std::vector<ChauvenetLimits> limits;           // one entry per iteration run
    ChauvenetLimits final_limits;                  // recomputed on the kept set
    int iterations_run = 0;
    std::vector<std::size_t> kept_indices;         // positions into the input
};

// Iterative Chauvenet criterion: per pass the exclusion threshold is
// z* = Phi^-1(1 - 1/(4n)) on the current set's mean and sd; values outside
// m +- z*.s are removed. Stops when a pass removes nothing or after
// max_iterations passes, whichever comes first.
ChauvenetResult chauvenet(std::span<const double> values, int max_iterations = 2);

// Same exclusion, but the removed entries are substituted by the median of
// the surviving values; output length equals input length.
std::vector<double> chauvenet_replace_median(std::span<const double> values,
                                             int max_iterations = 2,
                                             ChauvenetResult* detail = nullptr);

struct Deviation {
    MeasurementRecord record;  // value_um replaced by the deviation
    double area_mean = 0.0;
};

// Subtracts each record's areal average. The reference (CI) rows never get a
// deviation; whether they enter the area mean is ingestion policy.
std::vector<Deviation> normalize_to_area_averages(
    const std::vector<MeasurementRecord>& records,
    bool include_reference_in_area_mean = false);

enum class BinRule { Sturges, FreedmanDiaconis };

HistogramSpec histogram(std::span<const double> values, BinRule rule = BinRule::Sturges,
                        std::size_t bin_count = 0);

struct NppPoint {
    double theoretical = 0.0;  // normal quantile of the plotting position
    double value = 0.0;        // ordered sample value
};

// Plotting positions (i - 0.5)/n against ordered values.
std::vector<NppPoint> npp_points(std::span<const double> values);

// Median/quartiles by linear interpolation of order statistics; whiskers are
// the sample extrema.
SampleStats boxplot_stats(std::span<const double> values);

double sample_mean(std::span<const double> values);
double sample_sd(std::span<const double> values);
double sample_median(std::span<const double> values);
double quantile_linear(std::span<const double> sorted_values, double p);

}  // namespace surfmet::screen
