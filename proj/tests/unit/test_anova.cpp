#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "support.hpp"
#include "surfmet/anova.hpp"
#include "surfmet/records_io.hpp"

using namespace surfmet;
using namespace surfmet::anova;

namespace {

struct Loaded {
    std::vector<double> y;
    std::vector<std::string> instrument, magnification, area, day;
};

Loaded load_devs(const std::string& name, double drop = 1e300) {
    Loaded out;
    for (const auto& r : io::ingest_csv(fixture(name)).records) {
        if (r.value_um == drop) continue;
        out.y.push_back(r.value_um);
        out.instrument.push_back(to_string(r.instrument));
        out.magnification.push_back(std::to_string(static_cast<int>(*r.magnification)));
        out.area.push_back(r.area);
        out.day.push_back(r.day ? std::to_string(*r.day) : "unknown");
    }
    return out;
}

const AnovaRow& row_of(const AnovaTable& t, const std::string& name) {
    for (const auto& r : t.rows)
        if (r.factor == name) return r;
    REQUIRE(false);
    return t.rows.front();
}

}  // namespace

TEST_CASE("adjusted ANOVA of the height deviations") {
    auto d = load_devs("case1_devh.csv", -6.15);
    REQUIRE(d.y.size() == 41);
    auto design = encode_design(
        d.y, {{"Instrument", d.instrument}, {"Magnification", d.magnification}, {"Area", d.area}});
    auto t = anova(design, SumOfSquares::Adjusted);
    CHECK(t.r2 == doctest::Approx(0.600893).epsilon(1e-4));
    CHECK(row_of(t, "Instrument").p == doctest::Approx(0.004465).epsilon(1e-3));
    CHECK(row_of(t, "Magnification").p == doctest::Approx(0.028789).epsilon(1e-3));
    CHECK(row_of(t, "Area").p == doctest::Approx(0.695585).epsilon(1e-3));
    CHECK(row_of(t, "Residual").dof == 27);
}

TEST_CASE("adjusted and sequential ANOVA of the texture deviations") {
    Loaded d = load_devs("case1_devsq.csv");
    // drop the three screened values
    Loaded kept;
    for (std::size_t i = 0; i < d.y.size(); ++i) {
        double v = d.y[i];
        if (v == -1.54 || v == -1.38 || v == 1.43) continue;
        kept.y.push_back(v);
        kept.instrument.push_back(d.instrument[i]);
        kept.magnification.push_back(d.magnification[i]);
        kept.area.push_back(d.area[i]);
    }
    REQUIRE(kept.y.size() == 38);
    auto design = encode_design(kept.y, {{"Instrument", kept.instrument},
                                         {"Magnification", kept.magnification},
                                         {"Area", kept.area}});
    auto adj = anova(design, SumOfSquares::Adjusted);
    CHECK(adj.r2 == doctest::Approx(0.840399).epsilon(1e-4));
    CHECK(row_of(adj, "Instrument").p == doctest::Approx(0.154838).epsilon(1e-3));
    CHECK(row_of(adj, "Magnification").p < 0.01);
    CHECK(row_of(adj, "Area").p == doctest::Approx(0.252663).epsilon(1e-3));

    auto seq = anova(design, SumOfSquares::Sequential);
    CHECK(seq.r2 == doctest::Approx(adj.r2).epsilon(1e-12));
    CHECK(row_of(seq, "Instrument").p == doctest::Approx(0.0200).epsilon(2e-2));
}

TEST_CASE("sequential ANOVA of the step-height sequence with aliased day level") {
    auto recs = io::ingest_csv(fixture("case2_a13.csv")).records;
    std::vector<double> y;
    std::vector<std::string> day, mag;
    for (const auto& r : recs) {
        y.push_back(r.value_um);
        day.push_back(std::to_string(*r.day));
        mag.push_back(std::to_string(static_cast<int>(*r.magnification)));
    }
    auto t = anova(encode_design(y, {{"Day", day}, {"Magnification", mag}}),
                   SumOfSquares::Sequential);
    CHECK(t.r2 == doctest::Approx(0.757707).epsilon(1e-4));
    CHECK(row_of(t, "Day").p < 0.01);
    CHECK(row_of(t, "Magnification").p < 0.01);
    // the single-magnification day is absorbed by the magnification block
    CHECK_FALSE(t.aliased.empty());
}

TEST_CASE("balanced designs: sequential equals adjusted, any order") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g(0, 1);
    std::vector<double> y;
    std::vector<std::string> a, b;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            for (int rep = 0; rep < 5; ++rep) {
                y.push_back(0.7 * i - 0.3 * j + g(rng));
                a.push_back("a" + std::to_string(i));
                b.push_back("b" + std::to_string(j));
            }
    auto seq = anova(encode_design(y, {{"A", a}, {"B", b}}), SumOfSquares::Sequential);
    auto adj = anova(encode_design(y, {{"A", a}, {"B", b}}), SumOfSquares::Adjusted);
    auto seq_rev = anova(encode_design(y, {{"B", b}, {"A", a}}), SumOfSquares::Sequential);
    auto adj_rev = anova(encode_design(y, {{"B", b}, {"A", a}}), SumOfSquares::Adjusted);
    CHECK(row_of(seq, "A").ss == doctest::Approx(row_of(adj, "A").ss).epsilon(1e-8));
    CHECK(row_of(seq, "B").ss == doctest::Approx(row_of(adj, "B").ss).epsilon(1e-8));
    CHECK(row_of(seq_rev, "A").ss == doctest::Approx(row_of(seq, "A").ss).epsilon(1e-8));
    // adjusted SS never depends on factor order
    CHECK(row_of(adj_rev, "A").ss == doctest::Approx(row_of(adj, "A").ss).epsilon(1e-10));
    CHECK(row_of(adj_rev, "B").ss == doctest::Approx(row_of(adj, "B").ss).epsilon(1e-10));
}

TEST_CASE("sequential SS decomposes the total") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0, 1);
    std::vector<double> y;
    std::vector<std::string> a, b;
    // deliberately unbalanced
    for (int i = 0; i < 30; ++i) {
        int ai = i % 3, bi = (i * 7) % 4;
        if (ai == 2 && bi == 3) continue;
        y.push_back(0.2 * ai + 0.5 * bi + g(rng));
        a.push_back("a" + std::to_string(ai));
        b.push_back("b" + std::to_string(bi));
    }
    auto t = anova(encode_design(y, {{"A", a}, {"B", b}}), SumOfSquares::Sequential);
    double ybar = 0;
    for (double v : y) ybar += v;
    ybar /= static_cast<double>(y.size());
    double sst = 0;
    for (double v : y) sst += (v - ybar) * (v - ybar);
    double sum = 0;
    for (const auto& r : t.rows) sum += r.ss;
    CHECK(sum == doctest::Approx(sst).epsilon(1e-8));
}

TEST_CASE("degenerate designs") {
    std::vector<double> y{1, 2, 3, 4};
    std::vector<std::string> single{"x", "x", "x", "x"};
    CHECK_THROWS_AS(encode_design(y, {{"F", single}}), std::invalid_argument);

    // constant response: all factor SS vanish, p = 1
    std::vector<double> c{5, 5, 5, 5, 5, 5};
    std::vector<std::string> lv{"a", "a", "b", "b", "c", "c"};
    auto t = anova(encode_design(c, {{"F", lv}}), SumOfSquares::Sequential);
    CHECK(row_of(t, "F").ss == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(row_of(t, "F").p == doctest::Approx(1.0));
}
