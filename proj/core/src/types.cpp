#include "surfmet/types.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace surfmet {

std::string to_string(Instrument i) {
    switch (i) {
        case Instrument::FV: return "FV";
        case Instrument::LSC: return "LSC";
        case Instrument::CSI: return "CSI";
        case Instrument::CI: return "CI";
    }
    return "?";
}

std::string to_string(Measurand m) {
    switch (m) {
        case Measurand::StepHeight: return "H";
        case Measurand::RmsSq: return "Sq";
        case Measurand::Sa: return "Sa";
    }
    return "?";
}

Instrument instrument_from_string(const std::string& s) {
    if (s == "FV") return Instrument::FV;
    if (s == "LSC") return Instrument::LSC;
    if (s == "CSI") return Instrument::CSI;
    if (s == "CI") return Instrument::CI;
    throw std::invalid_argument("unknown instrument '" + s + "'");
}

Measurand measurand_from_string(const std::string& s) {
    if (s == "H" || s == "StepHeight") return Measurand::StepHeight;
    if (s == "Sq" || s == "RmsSq") return Measurand::RmsSq;
    if (s == "Sa") return Measurand::Sa;
    throw std::invalid_argument("unknown measurand '" + s + "'");
}

void MeasurementRecord::validate() const {
    if (!std::isfinite(value_um))
        throw std::invalid_argument("MeasurementRecord: non-finite value");
    if (magnification && !(*magnification > 0.0))
        throw std::invalid_argument("MeasurementRecord: magnification must be positive");
    if (day && *day < 1) throw std::invalid_argument("MeasurementRecord: day < 1");
    if (seq && *seq < 1) throw std::invalid_argument("MeasurementRecord: seq < 1");
    if (area.empty()) throw std::invalid_argument("MeasurementRecord: empty area label");
}

std::size_t Micrograph::valid_count() const {
    std::size_t n = 0;
    for (auto v : mask) n += v ? 1 : 0;
    return n;
}

void Micrograph::validate() const {
    if (nx == 0 || ny == 0) throw std::invalid_argument("Micrograph: empty grid");
    if (heights.size() != nx * ny || mask.size() != nx * ny)
        throw std::invalid_argument("Micrograph: grid size mismatch");
    if (!(pixel_dx_um > 0.0) || !(pixel_dy_um > 0.0))
        throw std::invalid_argument("Micrograph: pixel pitch must be positive");
}

Micrograph make_micrograph(std::size_t nx, std::size_t ny, double dx_um, double dy_um,
                           double fill) {
    Micrograph m;
    m.nx = nx;
    m.ny = ny;
    m.pixel_dx_um = dx_um;
    m.pixel_dy_um = dy_um;
    m.heights.assign(nx * ny, fill);
    m.mask.assign(nx * ny, 1);
    m.validate();
    return m;
}

void MaterialMeasureCalibration::validate() const {
    if (!(expanded_u > 0.0))
        throw std::invalid_argument("MaterialMeasureCalibration: U_ref_cal must be positive");
    if (coverage_k && !(*coverage_k > 0.0))
        throw std::invalid_argument("MaterialMeasureCalibration: coverage factor must be positive");
    if (n_input < 1)
        throw std::invalid_argument("MaterialMeasureCalibration: n_input < 1");
}

SessionDiagnostics validate_session(const std::vector<MeasurementRecord>& records) {
    if (records.empty()) throw std::invalid_argument("validate_session: no records");
    SessionDiagnostics diag;

    std::map<std::pair<Measurand, std::string>, std::size_t> groups;
    for (const auto& r : records) {
        r.validate();
        ++groups[{r.measurand, r.area}];
    }
    for (const auto& [key, n] : groups) {
        ReplicateCount rc;
        rc.measurand = key.first;
        rc.area = key.second;
        rc.n = n;
        rc.tcl_warning = n < 10;
        if (rc.tcl_warning) {
            diag.any_tcl_warning = true;
            diag.notes.push_back("TCL warning: " + to_string(key.first) + " at " + key.second +
                                 " has only " + std::to_string(n) + " replicates (want >= 10)");
        }
        diag.replicates.push_back(std::move(rc));
    }

    // a design is balanced when every level of every factor carries the same
    // number of observations per measurand
    auto level_counts_unbalanced = [&](auto level_of) {
        std::map<std::pair<Measurand, std::string>, std::size_t> counts;
        for (const auto& r : records) ++counts[{r.measurand, level_of(r)}];
        std::map<Measurand, std::set<std::size_t>> per_measurand;
        for (const auto& [key, n] : counts) per_measurand[key.first].insert(n);
        return std::any_of(per_measurand.begin(), per_measurand.end(),
                           [](const auto& kv) { return kv.second.size() > 1; });
    };
    const bool unb_inst = level_counts_unbalanced(
        [](const MeasurementRecord& r) { return to_string(r.instrument); });
    const bool unb_mag = level_counts_unbalanced([](const MeasurementRecord& r) {
        return r.magnification ? std::to_string(*r.magnification) : std::string("unknown");
    });
    const bool unb_area =
        level_counts_unbalanced([](const MeasurementRecord& r) { return r.area; });
    diag.unbalanced = unb_inst || unb_mag || unb_area;
    if (diag.unbalanced) diag.notes.push_back("unbalanced design: unequal replicates per level");
    return diag;
}

}  // namespace surfmet
