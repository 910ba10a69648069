#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "surfmet/anova.hpp"
#include "surfmet/micrograph.hpp"
#include "surfmet/micrograph_io.hpp"
#include "surfmet/mixture.hpp"
#include "surfmet/pipeline.hpp"
#include "surfmet/records_io.hpp"
#include "surfmet/regression.hpp"
#include "surfmet/screening.hpp"
#include "surfmet/uncertainty.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

struct CommonOpts {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> format;
};

surfmet::pipe::PipelineConfig load(const CommonOpts& o) {
    auto cfg = surfmet::pipe::load_config(o.config);
    surfmet::pipe::apply_overrides(cfg, o.seed, o.out, o.format);
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required = true) {
    auto* opt = cmd->add_option("--config", o.config, "pipeline configuration (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--seed", [&o](const CLI::results_t& r) {
        o.seed = std::stoull(r.at(0));
        return true;
    }, "override the config seed");
    cmd->add_option("--out", [&o](const CLI::results_t& r) {
        o.out = r.at(0);
        return true;
    }, "override the output directory");
    cmd->add_option("--format", [&o](const CLI::results_t& r) {
        o.format = r.at(0);
        return true;
    }, "report format: csv | json-lines");
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::cerr << "error: " << msg << "\n";
        // ingestion/config problems are user input problems
        if (msg.find("config") != std::string::npos ||
            msg.find("ingest") != std::string::npos || msg.find("malformed") != std::string::npos ||
            msg.find("missing") != std::string::npos || msg.find("unknown") != std::string::npos)
            return kExitValidation;
        return kExitRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"surfmet - systematics correction and uncertainty budgets for "
                 "surface-topography measurements"};
    app.require_subcommand(1);

    CommonOpts common;

    // full pipeline
    auto* run = app.add_subcommand("run", "run the configured case-study pipeline");
    add_common(run, common);

    // individual stages, all driven by the same config
    auto* ingest = app.add_subcommand("ingest-check", "parse a records CSV and report diagnostics");
    std::string ingest_path;
    ingest->add_option("csv", ingest_path, "records CSV")->required();

    auto* screen_cmd = app.add_subcommand("screen", "Chauvenet screening of the configured inputs");
    add_common(screen_cmd, common);
    auto* anova_cmd = app.add_subcommand("anova", "GLM ANOVA of the configured inputs");
    add_common(anova_cmd, common);
    auto* mixture_cmd = app.add_subcommand("mixture", "mixture decomposition of the configured inputs");
    add_common(mixture_cmd, common);
    auto* fit_cmd = app.add_subcommand("fit", "systematics regression of the configured inputs");
    add_common(fit_cmd, common);
    auto* budget_cmd = app.add_subcommand("budget", "uncertainty budgets of the configured inputs");
    add_common(budget_cmd, common);

    auto* doe = app.add_subcommand("doe", "interaction table of expanded uncertainties");
    std::string doe_summary_path;
    doe->add_option("summary", doe_summary_path, "summary.json of a characterization run")
        ->required();

    // micrograph utilities
    auto* micro = app.add_subcommand("micrograph", "height-map operations");
    micro->require_subcommand(1);
    std::string mg_in, mg_out;
    std::size_t eq_nx = 0, eq_ny = 0, corr_window = 0;
    double eq_dx = 0.0, eq_dy = 0.0;
    bool level_first = false;
    auto add_in = [&](CLI::App* c) {
        c->add_option("input", mg_in, "height-map file (or .csv grid)")->required();
        c->add_flag("--level", level_first, "subtract the least-squares plane first");
    };
    auto* mg_sq = micro->add_subcommand("sq", "areal RMS parameter");
    add_in(mg_sq);
    auto* mg_sa = micro->add_subcommand("sa", "areal mean-absolute parameter");
    add_in(mg_sa);
    auto* mg_step = micro->add_subcommand("step", "step height by the histogram technique");
    add_in(mg_step);
    auto* mg_eq = micro->add_subcommand("equalize", "resample to a target quantization level");
    add_in(mg_eq);
    mg_eq->add_option("--nx", eq_nx, "target pixels in x")->required();
    mg_eq->add_option("--ny", eq_ny, "target pixels in y")->required();
    mg_eq->add_option("--dx", eq_dx, "target pixel width / um")->required();
    mg_eq->add_option("--dy", eq_dy, "target pixel height / um")->required();
    mg_eq->add_option("--output", mg_out, "output height-map path")->required();
    auto* mg_corr = micro->add_subcommand("corr", "pixel correlation matrix (central window)");
    add_in(mg_corr);
    mg_corr->add_option("--window", corr_window, "window size in columns (0 = all)");
    mg_corr->add_option("--output", mg_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    auto load_mg = [&]() {
        surfmet::Micrograph m;
        if (mg_in.size() > 4 && mg_in.substr(mg_in.size() - 4) == ".csv")
            m = surfmet::micro::read_csv_grid(mg_in);
        else
            m = surfmet::micro::read_heightmap(mg_in);
        if (level_first) m = surfmet::micro::level_plane(m);
        return m;
    };

    if (run->parsed())
        return guarded([&] {
            auto bundle = surfmet::pipe::run_pipeline(load(common));
            for (const auto& f : bundle.written_files) std::cout << f << "\n";
            return kExitOk;
        });

    if (ingest->parsed())
        return guarded([&] {
            auto res = surfmet::io::ingest_csv(ingest_path);
            for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
            auto diag = surfmet::validate_session(res.records);
            std::cout << "records: " << res.records.size() << "\n";
            for (const auto& rc : diag.replicates)
                std::cout << surfmet::to_string(rc.measurand) << " " << rc.area << ": n=" << rc.n
                          << (rc.tcl_warning ? "  [TCL warning]" : "") << "\n";
            if (diag.unbalanced) std::cout << "design: unbalanced\n";
            return kExitOk;
        });

    // the stage verbs run the full pipeline (stages are cheap and share state
    // through the bundle) and print the stage-relevant files
    auto stage_filter = [&](const std::string& needle) {
        return guarded([&] {
            auto bundle = surfmet::pipe::run_pipeline(load(common));
            for (const auto& f : bundle.written_files)
                if (f.find(needle) != std::string::npos) std::cout << f << "\n";
            return kExitOk;
        });
    };
    if (screen_cmd->parsed()) return stage_filter("screen");
    if (anova_cmd->parsed()) return stage_filter("anova");
    if (mixture_cmd->parsed()) return stage_filter("mixture");
    if (fit_cmd->parsed()) return stage_filter("fit");
    if (budget_cmd->parsed()) return stage_filter("budget");

    if (doe->parsed())
        return guarded([&] {
            std::ifstream in(doe_summary_path);
            if (!in) throw std::invalid_argument("cannot open summary '" + doe_summary_path + "'");
            std::stringstream buf;
            buf << in.rdbuf();
            auto rows = surfmet::pipe::doe_summary(buf.str());
            std::cout << "corrected,factor,level,mean_U,n\n";
            for (const auto& r : rows)
                std::cout << r.corrected << "," << r.factor << "," << r.level << "," << r.mean_U
                          << "," << r.n << "\n";
            return kExitOk;
        });

    if (micro->parsed()) {
        if (mg_sq->parsed())
            return guarded([&] {
                std::printf("Sq_um %.9g\n", surfmet::micro::sq(load_mg()));
                return kExitOk;
            });
        if (mg_sa->parsed())
            return guarded([&] {
                std::printf("Sa_um %.9g\n", surfmet::micro::sa(load_mg()));
                return kExitOk;
            });
        if (mg_step->parsed())
            return guarded([&] {
                auto res = surfmet::micro::step_height_histogram(load_mg());
                std::printf("H_um %.9g\nlevel_low %.9g\nlevel_high %.9g\n", res.height_um,
                            res.level_low, res.level_high);
                if (res.extra_modes_warning)
                    std::cerr << "warning: more than two separated height modes; using the two "
                                 "tallest\n";
                return kExitOk;
            });
        if (mg_eq->parsed())
            return guarded([&] {
                auto out = surfmet::micro::equalize(load_mg(), eq_nx, eq_ny, eq_dx, eq_dy);
                surfmet::micro::write_heightmap(out, mg_out);
                std::cout << mg_out << "\n";
                return kExitOk;
            });
        if (mg_corr->parsed())
            return guarded([&] {
                auto cm = surfmet::micro::pixel_correlation(load_mg(), corr_window);
                std::ofstream out(mg_out);
                if (!out) throw std::runtime_error("cannot write '" + mg_out + "'");
                for (std::size_t i = 0; i < cm.size; ++i) {
                    for (std::size_t j = 0; j < cm.size; ++j) {
                        if (j) out << ',';
                        if (cm.defined[i * cm.size + j])
                            out << cm.at(i, j);
                        else
                            out << "nan";
                    }
                    out << '\n';
                }
                std::cout << mg_out << "\n";
                return kExitOk;
            });
    }
    std::cerr << "no subcommand\n";
    return kExitValidation;
}
