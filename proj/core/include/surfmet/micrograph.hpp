#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "surfmet/types.hpp"

// Height-map value extraction and conditioning: plane leveling, masked
// statistics, areal parameters, the step-height histogram technique,
// quantization-level equalization and pixel correlation.

namespace surfmet::micro {

// Subtracts the least-squares plane fitted over valid pixels; the mean valid
// residual height is zero.
Micrograph level_plane(const Micrograph& m);

// RMS of valid heights about their mean (areal Sq).
double sq(const Micrograph& m);
// Mean absolute deviation of valid heights about their mean (areal Sa).
double sa(const Micrograph& m);

struct StepHeightOptions {
    double bin_width_um = 0.0;       // 0 = Freedman-Diaconis over valid pixels
    double dead_band_fraction = 0.1; // minimum peak separation as range fraction
};

struct StepHeightResult {
    double height_um = 0.0;
    double level_low = 0.0;    // interpolated peak positions
    double level_high = 0.0;
    std::size_t modes_found = 0;
    bool extra_modes_warning = false;  // more than two separated maxima
};

// Height histogram over valid pixels; the step height is the distance between
// the two tallest local maxima separated by at least the dead band, with
// parabolic sub-bin refinement of each peak.
StepHeightResult step_height_histogram(const Micrograph& m, const StepHeightOptions& opt = {});

// Bilinear resampling onto a target grid sharing the source origin. An output
// pixel is masked when any of its four support pixels is invalid. Errors when
// the target grid extends beyond the source extent.
Micrograph equalize(const Micrograph& m, std::size_t target_nx, std::size_t target_ny,
                    double target_dx_um, double target_dy_um);

enum class CorrelationMode {
    RowsAsObservations,    // each grid row is one observation of the column variables
    StacksAsObservations,  // repeated micrographs observed per pixel column
};

struct CorrelationMatrix {
    std::size_t size = 0;
    std::vector<double> rho;          // size x size, row-major
    std::vector<std::uint8_t> defined;  // 0 where a column had zero variance
    double& at(std::size_t i, std::size_t j) { return rho[i * size + j]; }
    double at(std::size_t i, std::size_t j) const { return rho[i * size + j]; }
};

// Pearson correlation between column variables inside a centred window of
// `window` columns.
CorrelationMatrix pixel_correlation(const Micrograph& m, std::size_t window,
                                    CorrelationMode mode = CorrelationMode::RowsAsObservations);
CorrelationMatrix pixel_correlation(const std::vector<Micrograph>& stack, std::size_t window);

enum class FillPolicy { MaskOnly, NearestFill };

struct FillResult {
    Micrograph filled;
    std::vector<std::uint8_t> provenance;  // 1 where a pixel was filled
};

FillResult interpolate_nonmeasured(const Micrograph& m, FillPolicy policy);

}  // namespace surfmet::micro
