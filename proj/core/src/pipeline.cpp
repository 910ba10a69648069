#include "surfmet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "surfmet/anova.hpp"
#include "surfmet/mixture.hpp"
#include "surfmet/records_io.hpp"
#include "surfmet/regression.hpp"
#include "surfmet/screening.hpp"
#include "surfmet/uncertainty.hpp"

namespace surfmet::pipe {

using nlohmann::ordered_json;

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct Stage {
    const char* name;
    explicit Stage(const char* n) : name(n) {}
    [[noreturn]] void fail(const std::exception& e) const {
        throw std::runtime_error(std::string("stage ") + name + ": " + e.what());
    }
};

template <typename F>
auto stage(const char* name, F&& f) {
    Stage s(name);
    try {
        return f();
    } catch (const std::exception& e) {
        s.fail(e);
    }
}

class Reporter {
  public:
    Reporter(const PipelineConfig& cfg) : cfg_(cfg) {
        fs::create_directories(cfg.out_dir);
        unit_scale_ = cfg.report_unit == "nm" ? 1000.0 : 1.0;
    }

    double scale() const { return unit_scale_; }
    const std::string& unit() const { return cfg_.report_unit; }

    void write_text(const std::string& name, const std::string& text) {
        fs::path p = fs::path(cfg_.out_dir) / name;
        std::ofstream out(p);
        if (!out) throw std::runtime_error("cannot write report '" + p.string() + "'");
        out << text;
        files_.push_back(p.string());
    }

    void add_budget(const std::string& group, const UncertaintyBudget& b) {
        auto& rows = budget_csv_;
        for (const auto& c : b.contributors) {
            rows += group + "," + c.name + "," + fmt(c.u * unit_scale_) + "," +
                    fmt(std::abs(c.sensitivity)) + "," + fmt(c.propagated() * unit_scale_) + "," +
                    (std::isfinite(c.dof) ? fmt(c.dof) : "inf") + "\n";
        }
        rows += group + ",u_combined," + fmt(b.u_combined * unit_scale_) + ",,,\n";
        rows += group + ",nu_eff," + fmt(b.dof_eff) + ",,,\n";
        rows += group + ",k," + fmt(b.k) + ",,,\n";
        rows += group + ",U," + fmt(b.U * unit_scale_) + ",,,\n";
        ordered_json jb;
        jb["group"] = group;
        jb["u_combined"] = b.u_combined * unit_scale_;
        jb["dof_eff"] = b.dof_eff;
        jb["k"] = b.k;
        jb["U"] = b.U * unit_scale_;
        for (const auto& c : b.contributors)
            jb["contributors"].push_back({{"name", c.name},
                                          {"u", c.u * unit_scale_},
                                          {"sensitivity", std::abs(c.sensitivity)},
                                          {"u_of_y", c.propagated() * unit_scale_},
                                          {"dof", std::isfinite(c.dof) ? c.dof : -1.0}});
        summary_["budgets"].push_back(std::move(jb));
    }

    void flush_budgets() {
        if (budget_csv_.empty()) return;
        write_text("budgets.csv",
                   "group,contributor,u_xj,abs_cj,u_jy,dof\n" + budget_csv_);
    }

    void add_fit(const std::string& name, const RegressionFit& f) {
        std::string csv = "name,kind,";
        const char* coef_names[] = {"c0", "c1", "c2"};
        for (std::size_t i = 0; i < f.coeffs.size(); ++i)
            csv += std::string(coef_names[i]) + "," + "sd_" + coef_names[i] + ",";
        csv += "eps_rep,dof,r2,center\n";
        csv += name + ",";
        csv += (f.kind == FitKind::ThroughOrigin ? "through_origin"
                : f.kind == FitKind::Poly1       ? "poly1"
                                                 : "poly2");
        csv += ",";
        for (std::size_t i = 0; i < f.coeffs.size(); ++i)
            csv += fmt(f.coeffs[i]) + "," + fmt(f.coeff_sd[i]) + ",";
        csv += fmt(f.reproducibility) + "," + std::to_string(f.dof) + "," + fmt(f.r2) + "," +
               fmt(f.center) + "\n";
        write_text("fit_" + name + ".csv", csv);
        ordered_json jf;
        jf["name"] = name;
        jf["coeffs"] = f.coeffs;
        jf["coeff_sd"] = f.coeff_sd;
        jf["eps_rep"] = f.reproducibility;
        jf["dof"] = f.dof;
        jf["r2"] = f.r2;
        jf["center"] = f.center;
        summary_["fits"].push_back(std::move(jf));
    }

    void add_anova(const std::string& name, const AnovaTable& t) {
        std::string csv = "factor,ss,dof,ms,F,p,verdict\n";
        ordered_json jt;
        for (const auto& r : t.rows) {
            bool resid = r.factor == "Residual";
            csv += r.factor + "," + fmt(r.ss) + "," + std::to_string(r.dof) + "," + fmt(r.ms) +
                   "," + (resid ? "" : fmt(r.f)) + "," + (resid ? "" : fmt(r.p)) + "," +
                   (resid ? "" : (r.p < 0.05 ? "influence" : "no influence")) + "\n";
            if (!resid)
                jt["rows"].push_back({{"factor", r.factor},
                                      {"ss", r.ss},
                                      {"dof", r.dof},
                                      {"F", r.f},
                                      {"p", r.p},
                                      {"influence", r.p < 0.05}});
        }
        csv += "R2," + fmt(t.r2) + ",,,,,\n";
        for (const auto& a : t.aliased) csv += "aliased," + a + ",,,,,\n";
        write_text("anova_" + name + ".csv", csv);
        jt["r2"] = t.r2;
        jt["aliased"] = t.aliased;
        jt["name"] = name;
        summary_["anova"].push_back(std::move(jt));
    }

    void add_mixture(const std::string& name, const MixtureModel& m) {
        std::string csv = "kernel,mean,sd,weight_percent\n";
        ordered_json jm;
        jm["name"] = name;
        jm["chi2"] = m.chi2;
        for (std::size_t i = 0; i < m.kernels.size(); ++i) {
            const auto& k = m.kernels[i];
            csv += std::to_string(i + 1) + "," + fmt(k.mean) + "," + fmt(k.sd) + "," +
                   fmt(100.0 * k.weight) + "\n";
            jm["kernels"].push_back(
                {{"mean", k.mean}, {"sd", k.sd}, {"weight", k.weight}});
        }
        csv += "chi2," + fmt(m.chi2) + ",,\n";
        write_text("mixture_" + name + ".csv", csv);
        summary_["mixtures"].push_back(std::move(jm));
    }

    void add_screen(const std::string& name, const screen::ChauvenetResult& r) {
        std::string csv = "what,value,iteration\n";
        for (const auto& [v, it] : r.excluded)
            csv += "excluded," + fmt(v) + "," + std::to_string(it) + "\n";
        for (std::size_t i = 0; i < r.limits.size(); ++i)
            csv += "limits_iter" + std::to_string(i + 1) + "," + fmt(r.limits[i].lo) + ";" +
                   fmt(r.limits[i].hi) + "," + std::to_string(i + 1) + "\n";
        csv += "final_limits," + fmt(r.final_limits.lo) + ";" + fmt(r.final_limits.hi) + ",\n";
        write_text("screen_" + name + ".csv", csv);
        ordered_json js;
        js["name"] = name;
        for (const auto& [v, it] : r.excluded)
            js["excluded"].push_back({{"value", v}, {"iteration", it}});
        if (!js.contains("excluded")) js["excluded"] = ordered_json::array();
        js["final_limits"] = {r.final_limits.lo, r.final_limits.hi};
        js["iterations"] = r.iterations_run;
        summary_["screen"].push_back(std::move(js));
    }

    void add_plotdata(const std::string& name, const HistogramSpec& h,
                      const std::vector<screen::NppPoint>& npp,
                      const std::map<std::string, SampleStats>& boxes,
                      const std::vector<double>& residuals) {
        std::string hist = "bin_lo,bin_hi,count,normal_density\n";
        for (std::size_t b = 0; b < h.bins(); ++b) {
            double mid = 0.5 * (h.edges[b] + h.edges[b + 1]);
            double dens =
                h.normal_sd > 0.0
                    ? std::exp(-0.5 * std::pow((mid - h.normal_mean) / h.normal_sd, 2)) /
                          (h.normal_sd * 2.5066282746310002)
                    : 0.0;
            hist += fmt(h.edges[b]) + "," + fmt(h.edges[b + 1]) + "," +
                    std::to_string(h.counts[b]) + "," + fmt(dens) + "\n";
        }
        write_text("hist_" + name + ".csv", hist);
        std::string nppcsv = "theoretical_quantile,value\n";
        for (const auto& p : npp) nppcsv += fmt(p.theoretical) + "," + fmt(p.value) + "\n";
        write_text("npp_" + name + ".csv", nppcsv);
        std::string box = "group,n,mean,sd,median,q1,q3,iqr,min,max\n";
        for (const auto& [g, st] : boxes)
            box += g + "," + std::to_string(st.n) + "," + fmt(st.mean) + "," + fmt(st.sd) + "," +
                   fmt(st.median) + "," + fmt(st.q1) + "," + fmt(st.q3) + "," + fmt(st.iqr) +
                   "," + fmt(st.min) + "," + fmt(st.max) + "\n";
        write_text("box_" + name + ".csv", box);
        std::string res = "seq,residual\n";
        for (std::size_t i = 0; i < residuals.size(); ++i)
            res += std::to_string(i + 1) + "," + fmt(residuals[i]) + "\n";
        write_text("residuals_" + name + ".csv", res);
    }

    void add_subgroups(const std::string& name,
                       const std::vector<unc::SubgroupResult>& groups) {
        std::string csv = "group,value,U,u_combined,dof_eff,k\n";
        for (const auto& g : groups) {
            csv += g.label + "," + fmt(g.value * unit_scale_) + "," +
                   fmt(g.budget.U * unit_scale_) + "," +
                   fmt(g.budget.u_combined * unit_scale_) + "," + fmt(g.budget.dof_eff) + "," +
                   fmt(g.budget.k) + "\n";
            summary_["subgroups"].push_back({{"name", name},
                                             {"group", g.label},
                                             {"value", g.value * unit_scale_},
                                             {"U", g.budget.U * unit_scale_}});
        }
        write_text("subgroups_" + name + ".csv", csv);
    }

    ordered_json& summary() { return summary_; }

    ReportBundle finish() {
        flush_budgets();
        summary_["unit"] = cfg_.report_unit;
        std::string dump = summary_.dump(1);
        write_text("summary.json", dump);
        ReportBundle b;
        b.written_files = files_;
        b.summary_json = dump;
        return b;
    }

  private:
    const PipelineConfig& cfg_;
    double unit_scale_ = 1.0;
    std::string budget_csv_;
    std::vector<std::string> files_;
    ordered_json summary_;
};

std::string mag_label(const std::optional<double>& mag) {
    if (!mag) return "unknown";
    double r = std::round(*mag);
    if (std::abs(r - *mag) < 1e-9) return std::to_string(static_cast<long>(r)) + "x";
    return fmt(*mag) + "x";
}

std::string day_label(const std::optional<int>& day) {
    return day ? "Day" + std::to_string(*day) : "unknown";
}

std::vector<std::string> factor_levels(const std::vector<MeasurementRecord>& recs,
                                       const std::string& factor) {
    std::vector<std::string> out;
    out.reserve(recs.size());
    for (const auto& r : recs) {
        if (factor == "instrument") out.push_back(to_string(r.instrument));
        else if (factor == "magnification") out.push_back(mag_label(r.magnification));
        else if (factor == "area") out.push_back(r.area);
        else if (factor == "day") out.push_back(day_label(r.day));
        else throw std::invalid_argument("unknown factor '" + factor + "'");
    }
    return out;
}

// ---------------------------------------------------------------- comparison

void run_comparison(const PipelineConfig& cfg, Reporter& rep) {
    auto sessions = stage("ingest", [&] {
        auto it = cfg.inputs.find("sessions");
        if (it == cfg.inputs.end()) throw std::runtime_error("missing input 'sessions'");
        return io::ingest_csv(it->second);
    });

    // deviations: published dataset when provided, otherwise normalized here
    std::vector<MeasurementRecord> devrecs;
    if (auto it = cfg.inputs.find("deviations"); it != cfg.inputs.end()) {
        devrecs = stage("ingest", [&] { return io::ingest_csv(it->second).records; });
    } else {
        auto devs = stage("screening", [&] {
            return screen::normalize_to_area_averages(sessions.records,
                                                      cfg.include_reference_in_area_mean);
        });
        for (auto& d : devs) devrecs.push_back(d.record);
    }

    std::vector<double> devvals;
    for (const auto& r : devrecs) devvals.push_back(r.value_um);
    auto chv = stage("screening", [&] {
        return screen::chauvenet(devvals, cfg.chauvenet.max_iterations);
    });
    rep.add_screen("deviations", chv);

    std::vector<MeasurementRecord> kept;
    for (auto i : chv.kept_indices) kept.push_back(devrecs[i]);

    auto tbl = stage("anova", [&] {
        std::vector<anova::Factor> fs;
        std::vector<double> y;
        for (const auto& r : kept) y.push_back(r.value_um);
        for (const auto& fname : cfg.factors) fs.push_back({fname, factor_levels(kept, fname)});
        return anova::anova(anova::encode_design(y, fs),
                            cfg.anova_ss == "sequential" ? SumOfSquares::Sequential
                                                         : SumOfSquares::Adjusted);
    });
    rep.add_anova("deviations", tbl);

    if (cfg.mixture.k > 0) {
        auto model = stage("mixture", [&] {
            mix::MixtureConfig mc;
            mc.k = cfg.mixture.k;
            mc.restarts = cfg.mixture.restarts;
            mc.seed = cfg.seed;
            mc.bin_count = cfg.mixture.bin_count;
            return mix::fit_mixture(chv.kept, mc);
        });
        rep.add_mixture("deviations", model);
    }

    // de-normalized regression: pair the surviving optical measurements with
    // their area's reference value. Exclusions found on the deviation rows are
    // carried over by cell-and-repeat alignment.
    auto paired = stage("regression", [&] {
        std::map<std::string, double> ci;
        for (const auto& r : sessions.records)
            if (r.instrument == Instrument::CI) ci[r.area] = r.value_um;
        auto cell_key = [](const MeasurementRecord& r) {
            return r.area + "|" + to_string(r.instrument) + "|" + mag_label(r.magnification);
        };
        std::map<std::string, std::vector<std::size_t>> dev_cells;
        for (std::size_t i = 0; i < devrecs.size(); ++i)
            dev_cells[cell_key(devrecs[i])].push_back(i);
        std::set<std::size_t> kept_set(chv.kept_indices.begin(), chv.kept_indices.end());

        std::vector<PairedObservation> pairs;
        std::map<std::string, std::size_t> cell_pos;
        for (const auto& r : sessions.records) {
            if (r.instrument == Instrument::CI) continue;
            auto key = cell_key(r);
            auto it = dev_cells.find(key);
            std::size_t pos = cell_pos[key]++;
            bool keep = true;
            if (it != dev_cells.end() && pos < it->second.size())
                keep = kept_set.count(it->second[pos]) > 0;
            if (!keep) continue;
            auto ciit = ci.find(r.area);
            if (ciit == ci.end())
                throw std::runtime_error("area '" + r.area + "' has no reference value");
            pairs.push_back({ciit->second, r.value_um, r.area});
        }
        return pairs;
    });

    auto fit = stage("regression", [&] { return regress::fit_through_origin(paired); });
    rep.add_fit("through_origin", fit);

    stage("uncertainty", [&] {
        std::map<std::string, double> ci;
        for (const auto& r : sessions.records)
            if (r.instrument == Instrument::CI) ci[r.area] = r.value_um;
        std::vector<unc::SubgroupResult> rows;
        for (const auto& [area, x_ci] : ci) {
            auto cal = cfg.reference.calibration();
            cal.value = x_ci;
            unc::SubgroupResult sres;
            sres.label = area;
            sres.budget = unc::eval_comparison(fit, cal, x_ci, cfg.resolution_um);
            sres.value = fit.coeffs[0] * x_ci;
            rows.push_back(sres);
            rep.add_budget(area, rows.back().budget);
        }
        rep.add_subgroups("areas", rows);
        return 0;
    });

    std::map<std::string, SampleStats> boxes;
    std::map<std::string, std::vector<double>> per_area;
    for (const auto& r : devrecs) per_area[r.area].push_back(r.value_um);
    for (const auto& [a, v] : per_area)
        if (v.size() >= 4) boxes[a] = screen::boxplot_stats(v);
    rep.add_plotdata("deviations", screen::histogram(chv.kept), screen::npp_points(chv.kept),
                     boxes, fit.residuals);
}

// -------------------------------------------------------------- time sequence

void run_time_sequence(const PipelineConfig& cfg, Reporter& rep) {
    auto session = stage("ingest", [&] {
        auto it = cfg.inputs.find("session");
        if (it == cfg.inputs.end()) throw std::runtime_error("missing input 'session'");
        return io::ingest_csv(it->second);
    });
    auto recs = session.records;
    std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) {
        return a.seq.value_or(0) < b.seq.value_or(0);
    });
    for (const auto& r : recs)
        if (!r.seq) throw std::runtime_error("time_sequence: every record needs a seq index");

    std::vector<double> raw;
    for (const auto& r : recs) raw.push_back(r.value_um);

    screen::ChauvenetResult chv;
    std::vector<double> y;
    if (cfg.chauvenet.mode == "median_replace") {
        y = stage("screening", [&] {
            return screen::chauvenet_replace_median(raw, cfg.chauvenet.max_iterations, &chv);
        });
    } else {
        chv = stage("screening",
                    [&] { return screen::chauvenet(raw, cfg.chauvenet.max_iterations); });
        y = raw;  // exclusions only flagged; the sequence itself stays intact
    }
    rep.add_screen("session", chv);

    auto tbl = stage("anova", [&] {
        std::vector<anova::Factor> fs;
        for (const auto& fname : cfg.factors) fs.push_back({fname, factor_levels(recs, fname)});
        return anova::anova(anova::encode_design(y, fs),
                            cfg.anova_ss == "sequential" ? SumOfSquares::Sequential
                                                         : SumOfSquares::Adjusted);
    });
    rep.add_anova("session", tbl);

    if (cfg.mixture.k > 0) {
        auto model = stage("mixture", [&] {
            mix::MixtureConfig mc;
            mc.k = cfg.mixture.k;
            mc.restarts = cfg.mixture.restarts;
            mc.seed = cfg.seed;
            mc.bin_count = cfg.mixture.bin_count;
            return mix::fit_mixture(y, mc);
        });
        rep.add_mixture("session", model);
        if (!cfg.mixture.assign_factor.empty()) {
            auto assign = mix::assign_kernels_to_factors(model, recs, cfg.mixture.assign_factor);
            for (const auto& a : assign)
                rep.summary()["kernel_assignment"].push_back(
                    {{"kernel", a.kernel}, {"level", a.level}, {"tie", a.tie}});
        }
    }

    std::vector<double> t;
    for (const auto& r : recs) t.push_back(static_cast<double>(*r.seq));
    auto fit = stage("regression",
                     [&] { return regress::fit_poly(t, y, cfg.regression_order); });
    rep.add_fit("sequence", fit);

    auto diag = unc::residual_randomization_report(fit);
    rep.summary()["residual_diagnostics"] = {{"mean", diag.mean},
                                             {"sd", diag.sd},
                                             {"trend_slope", diag.trend_slope},
                                             {"nonzero_mean_flag", diag.nonzero_mean_flag}};

    stage("uncertainty", [&] {
        auto cal = cfg.reference.calibration();
        std::vector<unc::SubgroupResult> rows;
        auto run_groups = [&](const std::string& factor) {
            std::map<std::string, std::vector<std::size_t>> groups;
            std::vector<std::string> order;
            auto levels = factor_levels(recs, factor);
            for (std::size_t i = 0; i < recs.size(); ++i) {
                if (!groups.count(levels[i])) order.push_back(levels[i]);
                groups[levels[i]].push_back(i);
            }
            for (const auto& g : order)
                rows.push_back(unc::eval_time_sequence_subgroup(
                    fit, t, y, groups[g], g, cal, cfg.resolution_um));
        };
        run_groups("magnification");
        run_groups("day");
        for (const auto& r : rows) rep.add_budget(r.label, r.budget);
        rep.add_subgroups("session", rows);
        return 0;
    });

    std::map<std::string, SampleStats> boxes;
    std::map<std::string, std::vector<double>> per_mag;
    for (std::size_t i = 0; i < recs.size(); ++i)
        per_mag[mag_label(recs[i].magnification)].push_back(y[i]);
    for (const auto& [g, v] : per_mag)
        if (v.size() >= 4) boxes[g] = screen::boxplot_stats(v);
    rep.add_plotdata("session", screen::histogram(y), screen::npp_points(y), boxes,
                     fit.residuals);
}

// --------------------------------------------------------------- substitution

void run_substitution(const PipelineConfig& cfg, Reporter& rep) {
    auto load = [&](const char* role) {
        auto it = cfg.inputs.find(role);
        if (it == cfg.inputs.end())
            throw std::runtime_error(std::string("missing input '") + role + "'");
        auto recs = io::ingest_csv(it->second).records;
        std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) {
            return a.seq.value_or(0) < b.seq.value_or(0);
        });
        std::vector<PairedObservation> pairs;
        for (const auto& r : recs) {
            if (!r.seq) throw std::runtime_error("substitution: records need seq indices");
            pairs.push_back({static_cast<double>(*r.seq), r.value_um, r.area});
        }
        return pairs;
    };
    auto gauge = stage("ingest", [&] { return load("gauge"); });
    auto optical = stage("ingest", [&] { return load("optical"); });
    if (gauge.size() != optical.size())
        throw std::runtime_error(
            "stage ingest: substitution requires the same number of repeated measurements");

    auto fit_g = stage("regression", [&] { return regress::fit_through_origin(gauge); });
    auto fit_o = stage("regression", [&] { return regress::fit_through_origin(optical); });
    rep.add_fit("gauge", fit_g);
    rep.add_fit("optical", fit_o);

    auto res = stage("uncertainty", [&] {
        std::vector<double> ts;
        for (const auto& p : optical) ts.push_back(p.reference_um);
        return unc::eval_substitution(fit_g, fit_o, cfg.reference.calibration(), ts);
    });
    rep.add_budget("substitution", res.budget);
    std::string csv = "seq,corrected\n";
    for (std::size_t i = 0; i < res.corrected.size(); ++i)
        csv += std::to_string(i + 1) + "," + fmt(res.corrected[i] * rep.scale()) + "\n";
    rep.write_text("corrected_substitution.csv", csv);
    rep.summary()["substitution"] = {{"corrected_mean",
                                      screen::sample_mean(res.corrected) * rep.scale()},
                                     {"U", res.budget.U * rep.scale()}};
}

// ----------------------------------------------------------- characterization

void run_characterization(const PipelineConfig& cfg, Reporter& rep) {
    auto lsc = stage("ingest", [&] {
        auto it = cfg.inputs.find("optical");
        if (it == cfg.inputs.end()) throw std::runtime_error("missing input 'optical'");
        return io::ingest_csv(it->second).records;
    });
    auto ci = stage("ingest", [&] {
        auto it = cfg.inputs.find("reference");
        if (it == cfg.inputs.end()) throw std::runtime_error("missing input 'reference'");
        return io::ingest_csv(it->second).records;
    });

    auto split_area = [](const std::string& label) {
        auto pos = label.find(':');
        if (pos == std::string::npos) return std::pair<std::string, std::string>{label, ""};
        return std::pair<std::string, std::string>{label.substr(0, pos), label.substr(pos + 1)};
    };

    for (const auto& surf : cfg.surfaces) {
        // group optical repeats per sampling position, in first-seen order
        std::vector<std::string> positions;
        std::map<std::string, std::vector<double>> groups;
        for (const auto& r : lsc) {
            auto [s, pos] = split_area(r.area);
            if (s != surf.name) continue;
            if (!groups.count(pos)) positions.push_back(pos);
            groups[pos].push_back(r.value_um);
        }
        if (positions.empty())
            throw std::runtime_error("stage ingest: no optical rows for surface " + surf.name);
        std::vector<double> ci_rep;
        for (const auto& r : ci) {
            auto [s, pos] = split_area(r.area);
            if (s == surf.name && r.measurand == Measurand::RmsSq) ci_rep.push_back(r.value_um);
        }
        if (ci_rep.empty())
            throw std::runtime_error("stage ingest: no reference rows for surface " + surf.name);

        unc::CharacterizationInput in;
        for (const auto& pos : positions) {
            auto& vals = groups[pos];
            if (cfg.chauvenet.group_by == "area" && vals.size() >= 4) {
                auto chv = screen::chauvenet(vals, cfg.chauvenet.max_iterations);
                rep.add_screen(surf.name + "_" + pos, chv);
                in.area_groups.push_back(chv.kept);
            } else {
                in.area_groups.push_back(vals);
            }
        }
        in.ci_repeats = ci_rep;
        in.certificate.value = screen::sample_mean(ci_rep);
        in.certificate.expanded_u = surf.u_cal_um;
        in.certificate.n_input = surf.n_input;

        auto corr = stage("uncertainty",
                          [&] { return unc::eval_characterization_corrected(in); });
        auto unco = stage("uncertainty",
                          [&] { return unc::eval_characterization_uncorrected(in); });
        rep.add_budget(surf.name + "_corrected", corr.budget);
        rep.add_budget(surf.name + "_uncorrected", unco.budget);
        rep.summary()["characterization"].push_back(
            {{"surface", surf.name},
             {"q", corr.q},
             {"sigma_q", corr.sigma_q},
             {"corrected_value", corr.corrected_value * rep.scale()},
             {"pooled_within_sd", corr.pooled_within_sd * rep.scale()},
             {"U_corrected", corr.budget.U * rep.scale()},
             {"U_uncorrected", unco.budget.U * rep.scale()}});

        // per-area budgets feed the DOE interaction table
        for (const auto& pos : positions) {
            unc::CharacterizationInput one = in;
            one.area_groups = {in.area_groups[static_cast<std::size_t>(
                std::find(positions.begin(), positions.end(), pos) - positions.begin())]};
            auto c1 = unc::eval_characterization_corrected(one);
            auto u1 = unc::eval_characterization_uncorrected(one);
            rep.summary()["doe_cells"].push_back({{"surface", surf.name},
                                                  {"area", pos},
                                                  {"corrected", "yes"},
                                                  {"U", c1.budget.U * rep.scale()}});
            rep.summary()["doe_cells"].push_back({{"surface", surf.name},
                                                  {"area", pos},
                                                  {"corrected", "no"},
                                                  {"U", u1.budget.U * rep.scale()}});
        }
    }
}

}  // namespace

CaseKind case_from_string(const std::string& s) {
    if (s == "comparison") return CaseKind::Comparison;
    if (s == "time_sequence") return CaseKind::TimeSequence;
    if (s == "substitution") return CaseKind::Substitution;
    if (s == "characterization") return CaseKind::Characterization;
    throw std::invalid_argument("unknown case '" + s + "'");
}

MaterialMeasureCalibration ReferenceBlock::calibration() const {
    MaterialMeasureCalibration cal;
    cal.value = value_um;
    cal.expanded_u = expanded_u_um;
    cal.coverage_k = coverage_k;
    cal.n_input = n_input;
    return cal;
}

void PipelineConfig::validate() const {
    if (report_unit != "um" && report_unit != "nm")
        throw std::invalid_argument("config: report_unit must be um or nm");
    if (format != "csv" && format != "json-lines")
        throw std::invalid_argument("config: format must be csv or json-lines");
    if (anova_ss != "adjusted" && anova_ss != "sequential")
        throw std::invalid_argument("config: anova ss must be adjusted or sequential");
    if (chauvenet.mode != "exclude" && chauvenet.mode != "median_replace")
        throw std::invalid_argument("config: chauvenet mode must be exclude or median_replace");
    if (chauvenet.max_iterations < 1)
        throw std::invalid_argument("config: chauvenet max_iterations < 1");
    if (regression_order != 1 && regression_order != 2)
        throw std::invalid_argument("config: regression order must be 1 or 2");
    if (kind == CaseKind::Characterization && surfaces.empty())
        throw std::invalid_argument("config: characterization requires a surfaces block");
    if ((kind == CaseKind::TimeSequence || kind == CaseKind::Substitution) &&
        !(reference.expanded_u_um > 0.0))
        throw std::invalid_argument("config: reference block required for this case");
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("config parse error in '" + path + "': " + e.what());
    }
    PipelineConfig cfg;
    cfg.kind = case_from_string(j.at("case").get<std::string>());
    for (auto& [k, v] : j.at("inputs").items()) cfg.inputs[k] = v.get<std::string>();
    if (j.contains("factors"))
        cfg.factors = j["factors"].get<std::vector<std::string>>();
    if (j.contains("anova")) cfg.anova_ss = j["anova"].value("ss", cfg.anova_ss);
    if (j.contains("chauvenet")) {
        cfg.chauvenet.mode = j["chauvenet"].value("mode", cfg.chauvenet.mode);
        cfg.chauvenet.max_iterations =
            j["chauvenet"].value("max_iterations", cfg.chauvenet.max_iterations);
        cfg.chauvenet.group_by = j["chauvenet"].value("group_by", cfg.chauvenet.group_by);
    }
    if (j.contains("mixture")) {
        cfg.mixture.k = j["mixture"].value("k", 0);
        cfg.mixture.restarts = j["mixture"].value("restarts", cfg.mixture.restarts);
        cfg.mixture.bin_count = j["mixture"].value("bin_count", cfg.mixture.bin_count);
        cfg.mixture.assign_factor = j["mixture"].value("assign_factor", std::string());
    }
    if (j.contains("regression")) cfg.regression_order = j["regression"].value("order", 1);
    if (j.contains("reference")) {
        const auto& r = j["reference"];
        cfg.reference.value_um = r.value("value_um", 0.0);
        cfg.reference.expanded_u_um = r.value("expanded_u_um", 0.0);
        cfg.reference.n_input = r.value("n_input", 12);
        if (r.contains("coverage_k") && !r["coverage_k"].is_null())
            cfg.reference.coverage_k = r["coverage_k"].get<double>();
    }
    if (j.contains("surfaces"))
        for (const auto& s : j["surfaces"])
            cfg.surfaces.push_back({s.at("name").get<std::string>(),
                                    s.at("u_cal_um").get<double>(), s.value("n_input", 12)});
    cfg.resolution_um = j.value("resolution_um", cfg.resolution_um);
    cfg.include_reference_in_area_mean =
        j.value("include_reference_in_area_mean", cfg.include_reference_in_area_mean);
    cfg.report_unit = j.value("report_unit", cfg.report_unit);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.format = j.value("format", cfg.format);
    cfg.validate();
    return cfg;
}

void apply_overrides(PipelineConfig& cfg, std::optional<std::uint64_t> seed,
                     std::optional<std::string> out_dir, std::optional<std::string> format) {
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    if (format) cfg.format = *format;
    cfg.validate();
}

ReportBundle run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    Reporter rep(cfg);
    rep.summary()["case"] = [&] {
        switch (cfg.kind) {
            case CaseKind::Comparison: return "comparison";
            case CaseKind::TimeSequence: return "time_sequence";
            case CaseKind::Substitution: return "substitution";
            case CaseKind::Characterization: return "characterization";
        }
        return "?";
    }();
    rep.summary()["seed"] = cfg.seed;
    switch (cfg.kind) {
        case CaseKind::Comparison: run_comparison(cfg, rep); break;
        case CaseKind::TimeSequence: run_time_sequence(cfg, rep); break;
        case CaseKind::Substitution: run_substitution(cfg, rep); break;
        case CaseKind::Characterization: run_characterization(cfg, rep); break;
    }
    return rep.finish();
}

std::vector<DoeRow> doe_summary(const std::string& characterization_summary_json) {
    ordered_json j;
    try {
        j = ordered_json::parse(characterization_summary_json);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("doe_summary: bad summary json: ") + e.what());
    }
    if (!j.contains("doe_cells"))
        throw std::runtime_error("doe_summary: summary has no doe_cells (not a characterization run?)");

    std::map<std::pair<std::string, std::pair<std::string, std::string>>,
             std::pair<double, std::size_t>>
        acc;
    for (const auto& c : j["doe_cells"]) {
        std::string corrected = c.at("corrected").get<std::string>();
        double U = c.at("U").get<double>();
        acc[{corrected, {"surface", c.at("surface").get<std::string>()}}].first += U;
        acc[{corrected, {"surface", c.at("surface").get<std::string>()}}].second += 1;
        acc[{corrected, {"area", c.at("area").get<std::string>()}}].first += U;
        acc[{corrected, {"area", c.at("area").get<std::string>()}}].second += 1;
    }
    std::vector<DoeRow> rows;
    for (const auto& [key, val] : acc) {
        DoeRow r;
        r.corrected = key.first;
        r.factor = key.second.first;
        r.level = key.second.second;
        r.mean_U = val.first / static_cast<double>(val.second);
        r.n = val.second;
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace surfmet::pipe
