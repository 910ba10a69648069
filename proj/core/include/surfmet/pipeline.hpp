#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "surfmet/types.hpp"

// Config-driven analysis pipelines tying the modules into the three case
// studies, plus the report/plot-data emission. All randomness flows from the
// single config seed; reruns with the same config are byte-identical.

namespace surfmet::pipe {

enum class CaseKind { Comparison, TimeSequence, Substitution, Characterization };

CaseKind case_from_string(const std::string& s);

struct ChauvenetConfig {
    std::string mode = "exclude";  // exclude | median_replace
    int max_iterations = 2;
    std::string group_by = "none";  // none | area
};

struct MixtureBlock {
    int k = 0;  // 0 disables the mixture stage
    int restarts = 32;
    std::size_t bin_count = 0;
    std::string assign_factor;  // optional kernel-to-factor matching
};

struct ReferenceBlock {
    double value_um = 0.0;
    double expanded_u_um = 0.0;
    std::optional<double> coverage_k;
    int n_input = 12;

    MaterialMeasureCalibration calibration() const;
};

struct SurfaceBlock {
    std::string name;
    double u_cal_um = 0.0;  // certificate expanded uncertainty
    int n_input = 12;
};

struct PipelineConfig {
    CaseKind kind = CaseKind::Comparison;
    std::map<std::string, std::string> inputs;  // role -> csv path
    std::vector<std::string> factors;           // anova factor order
    std::string anova_ss = "adjusted";          // adjusted | sequential
    ChauvenetConfig chauvenet;
    MixtureBlock mixture;
    int regression_order = 1;
    ReferenceBlock reference;
    std::vector<SurfaceBlock> surfaces;
    double resolution_um = 0.001;
    bool include_reference_in_area_mean = false;
    std::string report_unit = "um";  // um | nm
    std::uint64_t seed = 12345;
    std::string out_dir = ".";
    std::string format = "csv";  // csv | json-lines

    void validate() const;
};

PipelineConfig load_config(const std::string& path);
// command-line overrides
void apply_overrides(PipelineConfig& cfg, std::optional<std::uint64_t> seed,
                     std::optional<std::string> out_dir, std::optional<std::string> format);

struct ReportBundle {
    std::vector<std::string> written_files;
    std::string summary_json;  // machine-readable summary (also written to disk)
};

ReportBundle run_pipeline(const PipelineConfig& cfg);

// Mean expanded uncertainty per factor-level pair for the characterization
// DOE; rows are (corrected, surface|area, mean U).
struct DoeRow {
    std::string corrected;  // "yes" | "no"
    std::string factor;     // "surface" | "area"
    std::string level;
    double mean_U = 0.0;
    std::size_t n = 0;
};
std::vector<DoeRow> doe_summary(const std::string& characterization_summary_json);

}  // namespace surfmet::pipe
