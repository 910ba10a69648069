#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "support.hpp"
#include "surfmet/records_io.hpp"
#include "surfmet/regression.hpp"
#include "surfmet/screening.hpp"

using namespace surfmet;
using namespace surfmet::regress;

namespace {

// pairs (reference, optical) for the cross-instrument comparison, excluding
// the values the screening rejects
std::vector<PairedObservation> comparison_pairs(const std::string& sessions,
                                                const std::string& deviations) {
    auto sess = io::ingest_csv(fixture(sessions)).records;
    auto devs = io::ingest_csv(fixture(deviations)).records;
    std::vector<double> dv;
    for (const auto& r : devs) dv.push_back(r.value_um);
    auto chv = screen::chauvenet(dv, 2);
    std::vector<bool> kept(dv.size(), false);
    for (auto i : chv.kept_indices) kept[i] = true;

    std::map<std::string, double> ci;
    for (const auto& r : sess)
        if (r.instrument == Instrument::CI) ci[r.area] = r.value_um;

    // session rows and deviation rows share cell order
    std::vector<PairedObservation> pairs;
    std::size_t di = 0;
    for (const auto& r : sess) {
        if (r.instrument == Instrument::CI) continue;
        bool keep = kept.at(di++);
        if (keep) pairs.push_back({ci.at(r.area), r.value_um, r.area});
    }
    return pairs;
}

}  // namespace

TEST_CASE("through-origin fit reproduces the height comparison") {
    auto pairs = comparison_pairs("case1_heights.csv", "case1_devh.csv");
    REQUIRE(pairs.size() == 41);
    auto fit = fit_through_origin(pairs);
    CHECK(fit.coeffs[0] == doctest::Approx(0.9979066258).epsilon(1e-9));
    CHECK(fit.coeff_sd[0] == doctest::Approx(0.0023336342).epsilon(1e-8));
    CHECK(fit.reproducibility == doctest::Approx(2.0936379231).epsilon(1e-9));
    CHECK(fit.dof == 40);
    CHECK(fit.r2 == doctest::Approx(0.9997812990).epsilon(1e-9));
}

TEST_CASE("through-origin fit reproduces the texture comparison") {
    auto pairs = comparison_pairs("case1_sq.csv", "case1_devsq.csv");
    REQUIRE(pairs.size() == 38);
    auto fit = fit_through_origin(pairs);
    CHECK(fit.coeffs[0] == doctest::Approx(1.0381728491).epsilon(1e-9));
    CHECK(fit.coeff_sd[0] == doctest::Approx(0.0324480302).epsilon(1e-8));
    CHECK(fit.reproducibility == doctest::Approx(0.4039715906).epsilon(1e-9));
    CHECK(fit.dof == 37);
}

TEST_CASE("through-origin basics and equivariance") {
    std::vector<PairedObservation> exact;
    for (int i = 1; i <= 6; ++i) exact.push_back({double(i), 2.0 * i, "x"});
    auto f = fit_through_origin(exact);
    CHECK(f.coeffs[0] == doctest::Approx(2.0));
    CHECK(f.reproducibility == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(f.r2 == doctest::Approx(1.0));

    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0, 0.2);
    std::vector<PairedObservation> noisy;
    for (int i = 1; i <= 15; ++i) noisy.push_back({double(i), 1.3 * i + g(rng), "x"});
    auto base = fit_through_origin(noisy);

    auto scaled_y = noisy;
    for (auto& p : scaled_y) p.optical_um *= 4.0;
    auto fy = fit_through_origin(scaled_y);
    CHECK(fy.coeffs[0] == doctest::Approx(4.0 * base.coeffs[0]).epsilon(1e-12));
    CHECK(fy.coeff_sd[0] == doctest::Approx(4.0 * base.coeff_sd[0]).epsilon(1e-12));
    CHECK(fy.reproducibility == doctest::Approx(4.0 * base.reproducibility).epsilon(1e-12));
    CHECK(fy.r2 == doctest::Approx(base.r2).epsilon(1e-12));

    auto scaled_x = noisy;
    for (auto& p : scaled_x) p.reference_um *= 4.0;
    auto fx = fit_through_origin(scaled_x);
    CHECK(fx.coeffs[0] == doctest::Approx(base.coeffs[0] / 4.0).epsilon(1e-12));
    CHECK(fx.r2 == doctest::Approx(base.r2).epsilon(1e-12));

    std::vector<PairedObservation> zeros{{0, 1, "x"}, {0, 2, "x"}};
    CHECK_THROWS_AS(fit_through_origin(zeros), std::invalid_argument);
}

TEST_CASE("first-order sequence fit reproduces the step-height session") {
    auto recs = io::ingest_csv(fixture("case2_a13.csv")).records;
    std::vector<double> t, y;
    for (const auto& r : recs) {
        t.push_back(static_cast<double>(*r.seq));
        y.push_back(r.value_um);
    }
    auto fit = fit_poly(t, y, 1);
    CHECK(fit.center == doctest::Approx(13.0));
    CHECK(fit.coeffs[0] == doctest::Approx(162.84).epsilon(1e-10));
    CHECK(fit.coeffs[1] == doctest::Approx(-0.0580769231).epsilon(1e-8));
    CHECK(fit.coeff_sd[0] == doctest::Approx(0.1271438234).epsilon(1e-8));
    CHECK(fit.coeff_sd[1] == doctest::Approx(0.0176316760).epsilon(1e-8));
    CHECK(fit.reproducibility == doctest::Approx(0.6357191172).epsilon(1e-9));
    CHECK(fit.dof == 23);
    CHECK(fit.r2 == doctest::Approx(0.3205268781).epsilon(1e-8));
}

TEST_CASE("second-order fit of the equalized texture sequence") {
    auto recs = io::ingest_csv(fixture("case2_a21_equalized.csv")).records;
    std::vector<double> t, raw;
    for (const auto& r : recs) {
        t.push_back(static_cast<double>(*r.seq));
        raw.push_back(r.value_um);
    }
    auto y = screen::chauvenet_replace_median(raw, 4);
    auto fit = fit_poly(t, y, 2);
    CHECK(fit.reproducibility == doctest::Approx(0.0682787922).epsilon(1e-8));
    CHECK(fit.dof == 27);
    CHECK(fit.r2 == doctest::Approx(0.2626884753).epsilon(1e-8));
    CHECK(fit.coeffs[0] == doctest::Approx(5.2127299107).epsilon(1e-8));
}

TEST_CASE("fit_poly contracts") {
    std::vector<double> t{1, 2, 3, 4, 5};
    std::vector<double> line{3, 5, 7, 9, 11};  // 1 + 2t
    auto f = fit_poly(t, line, 1);
    for (double r : f.residuals) CHECK(r == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(f.predict(3.0) == doctest::Approx(7.0));

    std::vector<double> flat{2, 2, 2, 2, 2};
    CHECK_THROWS_AS(fit_poly(flat, line, 1), std::invalid_argument);

    // OLS residuals orthogonal to the design columns
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0, 1);
    std::vector<double> tt, yy;
    for (int i = 1; i <= 30; ++i) {
        tt.push_back(i);
        yy.push_back(0.5 + 0.1 * i + 0.02 * i * i + g(rng));
    }
    auto f2 = fit_poly(tt, yy, 2);
    double s0 = 0, s1 = 0, s2 = 0, norm = 0;
    for (std::size_t i = 0; i < tt.size(); ++i) {
        double s = tt[i] - f2.center;
        s0 += f2.residuals[i];
        s1 += f2.residuals[i] * s;
        s2 += f2.residuals[i] * s * s;
        norm += std::abs(f2.residuals[i]);
    }
    CHECK(std::abs(s0) / norm < 1e-9);
    CHECK(std::abs(s1) / norm < 1e-9);
    CHECK(std::abs(s2) / norm < 1e-9);
}

TEST_CASE("residual trend flags an under-fitted model") {
    std::vector<double> t, y;
    for (int i = 1; i <= 25; ++i) {
        t.push_back(i);
        y.push_back(0.05 * i * i);  // quadratic truth
    }
    auto f1 = fit_poly(t, y, 1);
    auto tr1 = residual_trend(f1);
    // a straight line through quadratic data leaves curvature, caught by the
    // quadratic refit; the linear trend of its own residuals is still zero
    CHECK(tr1.slope == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    auto f2 = fit_poly(t, y, 2);
    auto tr2 = residual_trend(f2);
    CHECK(tr2.slope == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    CHECK_FALSE(tr2.trend_detected);

    // residuals with a planted drift are flagged
    RegressionFit fake;
    fake.kind = FitKind::Poly1;
    for (int i = 0; i < 20; ++i) fake.residuals.push_back(0.1 * i + ((i % 2) ? 0.01 : -0.01));
    auto tr3 = residual_trend(fake);
    CHECK(tr3.trend_detected);
    CHECK(tr3.slope == doctest::Approx(0.1).epsilon(1e-2));
}
