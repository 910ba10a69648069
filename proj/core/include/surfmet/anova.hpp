#pragma once

#include <string>
#include <vector>

#include "surfmet/types.hpp"

// General-linear-model ANOVA for unbalanced designs, with Type-I (sequential)
// and factor-last adjusted sums of squares.

namespace surfmet::anova {

struct Factor {
    std::string name;
    std::vector<std::string> levels;  // one label per observation
};

struct DesignMatrix {
    std::vector<double> response;
    std::vector<Factor> factors;  // order matters for sequential SS
};

// Treatment coding with the first observed level of each factor as reference.
// Throws when a factor has a single level. Levels that are exactly aliased by
// preceding terms are kept in the matrix and reported by anova().
DesignMatrix encode_design(const std::vector<double>& response,
                           const std::vector<Factor>& factors);

// Sequential = incremental explained SS in factor order; Adjusted = each
// factor's SS given all other factors (equal to Type II/III here since no
// interactions are modelled). F is against the full-model residual MS.
// Exactly aliased columns are dropped from the rank and listed in the result.
AnovaTable anova(const DesignMatrix& design, SumOfSquares ss_kind);

}  // namespace surfmet::anova
