#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "surfmet/micrograph.hpp"
#include "surfmet/micrograph_io.hpp"

using namespace surfmet;
using namespace surfmet::micro;

namespace {

Micrograph two_level(std::size_t nx, std::size_t ny, double low, double high, double split,
                     double noise_sd = 0.0, std::uint64_t seed = 1) {
    auto m = make_micrograph(nx, ny, 0.5, 0.5);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, noise_sd);
    for (std::size_t iy = 0; iy < ny; ++iy)
        for (std::size_t ix = 0; ix < nx; ++ix) {
            double base = (static_cast<double>(ix) < split * nx) ? low : high;
            m.at(ix, iy) = base + (noise_sd > 0 ? g(rng) : 0.0);
        }
    return m;
}

std::filesystem::path tmpdir() {
    auto p = std::filesystem::temp_directory_path() / "surfmet_micro_tests";
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("plane leveling removes an exact plane") {
    auto m = make_micrograph(24, 18, 0.7, 1.1);
    for (std::size_t iy = 0; iy < m.ny; ++iy)
        for (std::size_t ix = 0; ix < m.nx; ++ix)
            m.at(ix, iy) = 3.0 + 0.25 * ix * m.pixel_dx_um - 0.05 * iy * m.pixel_dy_um;
    auto lv = level_plane(m);
    for (double z : lv.heights) CHECK(z == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));

    // a step on a tilted plane survives with its height intact
    auto stepped = m;
    for (std::size_t iy = 0; iy < m.ny; ++iy)
        for (std::size_t ix = m.nx / 2; ix < m.nx; ++ix) stepped.at(ix, iy) += 5.0;
    auto lv2 = level_plane(stepped);
    double lo = 0, hi = 0;
    std::size_t nlo = 0, nhi = 0;
    for (std::size_t iy = 0; iy < m.ny; ++iy)
        for (std::size_t ix = 0; ix < m.nx; ++ix) {
            // the plane fit tilts through the step, so compare group means
            if (ix < m.nx / 2) { lo += lv2.at(ix, iy); ++nlo; }
            else { hi += lv2.at(ix, iy); ++nhi; }
        }
    CHECK(hi / nhi - lo / nlo == doctest::Approx(5.0).epsilon(0.02));

    // masked pixels are ignored by the fit
    auto holey = m;
    for (std::size_t i = 0; i < holey.mask.size(); i += 7) {
        holey.mask[i] = 0;
        holey.heights[i] = 1e9;
    }
    auto lv3 = level_plane(holey);
    double mean = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < lv3.heights.size(); ++i)
        if (lv3.mask[i]) { mean += lv3.heights[i]; ++n; }
    CHECK(mean / n == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));

    auto degenerate = make_micrograph(5, 5, 1, 1);
    for (auto& v : degenerate.mask) v = 0;
    degenerate.mask[0] = degenerate.mask[1] = degenerate.mask[2] = 1;  // collinear row
    CHECK_THROWS_AS(level_plane(degenerate), std::invalid_argument);
}

TEST_CASE("sq and sa closed forms") {
    auto flat = make_micrograph(10, 10, 1, 1, 4.2);
    CHECK(sq(flat) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(sa(flat) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

    const double h = 3.6;
    auto half = two_level(40, 20, 0.0, h, 0.5);
    CHECK(sq(half) == doctest::Approx(h / 2.0).epsilon(1e-9));
    CHECK(sa(half) == doctest::Approx(h / 2.0).epsilon(1e-9));

    // offset invariance and the Jensen ordering
    auto shifted = half;
    for (auto& z : shifted.heights) z += 123.0;
    CHECK(sq(shifted) == doctest::Approx(sq(half)).epsilon(1e-12));
    CHECK(sa(shifted) == doctest::Approx(sa(half)).epsilon(1e-12));
    auto noisy = two_level(40, 20, 0.0, h, 0.35, 0.4, 5);
    CHECK(sa(noisy) <= sq(noisy) + 1e-12);

    // horizontal flip invariance
    auto flipped = noisy;
    for (std::size_t iy = 0; iy < noisy.ny; ++iy)
        for (std::size_t ix = 0; ix < noisy.nx; ++ix)
            flipped.at(ix, iy) = noisy.at(noisy.nx - 1 - ix, iy);
    CHECK(sq(flipped) == doctest::Approx(sq(noisy)).epsilon(1e-12));

    auto all_masked = flat;
    for (auto& v : all_masked.mask) v = 0;
    CHECK_THROWS_AS(sq(all_masked), std::invalid_argument);
}

TEST_CASE("step height by the histogram technique") {
    const double planted = 85.2;
    auto m = two_level(120, 80, 0.0, planted, 0.5, 0.1, 42);
    auto res = step_height_histogram(m);
    CHECK(res.height_um == doctest::Approx(planted).epsilon(0).scale(0).epsilon(0.0006));
    CHECK(res.modes_found >= 2);

    // unequal plateau areas do not move the peak positions
    auto uneven = two_level(120, 80, 0.0, planted, 0.25, 0.1, 43);
    auto res2 = step_height_histogram(uneven);
    CHECK(std::abs(res2.height_um - res.height_um) < 0.05);

    // vertical offset and flips leave the step height unchanged
    auto off = m;
    for (auto& z : off.heights) z += 11.0;
    CHECK(step_height_histogram(off).height_um == doctest::Approx(res.height_um).epsilon(1e-12));

    auto uni = two_level(60, 40, 0.0, 0.0, 1.0, 0.2, 44);
    CHECK_THROWS_AS(step_height_histogram(uni), std::runtime_error);

    // three plateaus: the two tallest win, with a warning
    auto three = make_micrograph(90, 60, 1, 1);
    for (std::size_t iy = 0; iy < three.ny; ++iy)
        for (std::size_t ix = 0; ix < three.nx; ++ix)
            three.at(ix, iy) = ix < 40 ? 0.0 : (ix < 80 ? 10.0 : 20.0);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 0.05);
    for (auto& z : three.heights) z += g(rng);
    auto res3 = step_height_histogram(three);
    CHECK(res3.extra_modes_warning);
    CHECK(res3.height_um == doctest::Approx(10.0).epsilon(0.01));
}

TEST_CASE("equalization identity and affine reproduction") {
    auto ramp = make_micrograph(33, 21, 0.4, 0.6);
    for (std::size_t iy = 0; iy < ramp.ny; ++iy)
        for (std::size_t ix = 0; ix < ramp.nx; ++ix)
            ramp.at(ix, iy) = 2.0 + 0.3 * ix * 0.4 + 0.7 * iy * 0.6;

    auto same = equalize(ramp, ramp.nx, ramp.ny, ramp.pixel_dx_um, ramp.pixel_dy_um);
    for (std::size_t i = 0; i < ramp.heights.size(); ++i)
        CHECK(same.heights[i] == doctest::Approx(ramp.heights[i]).scale(1.0).epsilon(1e-12));

    // a bilinear resample reproduces an affine surface exactly
    auto down = equalize(ramp, 17, 11, 0.8, 1.2);
    for (std::size_t iy = 0; iy < down.ny; ++iy)
        for (std::size_t ix = 0; ix < down.nx; ++ix) {
            double expect = 2.0 + 0.3 * (ix * 0.8) + 0.7 * (iy * 1.2);
            CHECK(down.at(ix, iy) == doctest::Approx(expect).scale(1.0).epsilon(1e-12));
        }

    CHECK_THROWS_AS(equalize(ramp, 100, 21, 0.4, 0.6), std::invalid_argument);

    // invalid support propagates into the output mask
    auto holey = ramp;
    holey.mask[5 * holey.nx + 7] = 0;
    auto eq = equalize(holey, 33, 21, 0.4, 0.6);
    CHECK_FALSE(eq.valid(7, 5));

    // band-limited surface keeps its texture through a resample round trip
    auto smooth = make_micrograph(96, 96, 0.25, 0.25);
    for (std::size_t iy = 0; iy < smooth.ny; ++iy)
        for (std::size_t ix = 0; ix < smooth.nx; ++ix)
            smooth.at(ix, iy) = std::sin(0.12 * ix) * std::cos(0.09 * iy);
    auto resampled = equalize(smooth, 64, 64, 0.25 * 95.0 / 63.0, 0.25 * 95.0 / 63.0);
    CHECK(sq(resampled) == doctest::Approx(sq(smooth)).epsilon(0.02));
}

TEST_CASE("pixel correlation") {
    // duplicate rows correlate perfectly
    auto dup = make_micrograph(12, 6, 1, 1);
    for (std::size_t iy = 0; iy < dup.ny; ++iy)
        for (std::size_t ix = 0; ix < dup.nx; ++ix)
            dup.at(ix, iy) = std::sin(0.8 * ix) + 0.001 * iy;
    auto cm = pixel_correlation(dup, 6);
    REQUIRE(cm.size == 6);
    for (std::size_t i = 0; i < cm.size; ++i)
        for (std::size_t j = 0; j < cm.size; ++j)
            if (cm.defined[i * cm.size + j]) {
                CHECK(cm.at(i, j) == doctest::Approx(cm.at(j, i)).epsilon(1e-12));
                if (i == j) CHECK(cm.at(i, j) == doctest::Approx(1.0).epsilon(1e-12));
            }

    // column j against its negation
    auto anti = make_micrograph(2, 8, 1, 1);
    for (std::size_t iy = 0; iy < anti.ny; ++iy) {
        anti.at(0, iy) = static_cast<double>(iy) + ((iy % 2) ? 0.3 : -0.2);
        anti.at(1, iy) = -anti.at(0, iy);
    }
    auto ca = pixel_correlation(anti, 2);
    CHECK(ca.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));

    // white noise decorrelates
    auto noise = make_micrograph(64, 400, 1, 1);
    std::mt19937_64 rng(123);
    std::normal_distribution<double> g;
    for (auto& z : noise.heights) z = g(rng);
    auto cn = pixel_correlation(noise, 32);
    std::size_t small = 0, offdiag = 0;
    for (std::size_t i = 0; i < cn.size; ++i)
        for (std::size_t j = 0; j < cn.size; ++j)
            if (i != j) {
                ++offdiag;
                if (std::abs(cn.at(i, j)) < 0.1) ++small;
            }
    CHECK(static_cast<double>(small) / static_cast<double>(offdiag) > 0.95);

    // zero-variance column is masked, not fabricated
    auto flatcol = make_micrograph(3, 6, 1, 1);
    for (std::size_t iy = 0; iy < flatcol.ny; ++iy) {
        flatcol.at(0, iy) = 1.0;
        flatcol.at(1, iy) = static_cast<double>(iy);
        flatcol.at(2, iy) = static_cast<double>(iy * iy);
    }
    auto cf = pixel_correlation(flatcol, 3);
    CHECK_FALSE(cf.defined[0 * 3 + 1]);
    CHECK(cf.defined[1 * 3 + 2]);

    // stack mode: identical micrographs have no variance to correlate,
    // noisy stacks produce a defined matrix
    std::vector<Micrograph> stack;
    for (int r = 0; r < 8; ++r) {
        auto mg = make_micrograph(16, 5, 1, 1);
        std::mt19937_64 srng(40 + r);
        for (auto& z : mg.heights) z = std::normal_distribution<double>(0, 1)(srng);
        stack.push_back(std::move(mg));
    }
    auto cs = pixel_correlation(stack, 8);
    CHECK(cs.size == 8);
    for (std::size_t i = 0; i < cs.size; ++i) CHECK(cs.at(i, i) == doctest::Approx(1.0));
}

TEST_CASE("non-measured pixel handling") {
    auto m = make_micrograph(9, 9, 1, 1, 2.5);
    auto identity = interpolate_nonmeasured(m, FillPolicy::NearestFill);
    for (std::size_t i = 0; i < m.heights.size(); ++i) CHECK(identity.provenance[i] == 0);

    // single hole surrounded by a constant fills with that constant
    m.mask[4 * 9 + 4] = 0;
    m.heights[4 * 9 + 4] = 1e9;
    auto filled = interpolate_nonmeasured(m, FillPolicy::NearestFill);
    CHECK(filled.filled.heights[4 * 9 + 4] == doctest::Approx(2.5));
    CHECK(filled.provenance[4 * 9 + 4] == 1);
    CHECK(filled.filled.valid(4, 4));

    // mask-only leaves the hole and the statistics use the valid count
    auto masked = interpolate_nonmeasured(m, FillPolicy::MaskOnly);
    CHECK_FALSE(masked.filled.valid(4, 4));

    std::mt19937_64 rng(77);
    auto big = make_micrograph(40, 40, 1, 1);
    std::normal_distribution<double> g(10.0, 1.0);
    std::uniform_real_distribution<double> u(0, 1);
    std::size_t holes = 0;
    for (std::size_t i = 0; i < big.heights.size(); ++i) {
        big.heights[i] = g(rng);
        if (u(rng) < 0.3) {
            big.mask[i] = 0;
            ++holes;
        }
    }
    CHECK(big.valid_count() == big.heights.size() - holes);
    CHECK_NOTHROW(sq(big));
}

TEST_CASE("height-map file round trip") {
    auto dir = tmpdir();
    auto m = two_level(31, 17, 1.0, 7.5, 0.4, 0.2, 3);
    m.mask[5] = 0;
    m.heights[5] = std::numeric_limits<double>::quiet_NaN();
    auto path = (dir / "roundtrip.shm").string();
    write_heightmap(m, path);
    auto rt = read_heightmap(path);
    REQUIRE(rt.nx == m.nx);
    REQUIRE(rt.ny == m.ny);
    CHECK(rt.pixel_dx_um == doctest::Approx(m.pixel_dx_um));
    CHECK_FALSE(rt.valid(5, 0));
    for (std::size_t i = 0; i < m.heights.size(); ++i)
        if (m.mask[i])
            CHECK(rt.heights[i] ==
                  doctest::Approx(static_cast<float>(m.heights[i])).epsilon(1e-7));

    auto csv = (dir / "grid.csv").string();
    {
        std::ofstream out(csv);
        out << "1.0,2.0,3.0\n4.0,,6.0\n7.0,8.0,nan\n";
    }
    auto g = read_csv_grid(csv);
    REQUIRE(g.nx == 3);
    REQUIRE(g.ny == 3);
    CHECK(g.at(0, 1) == doctest::Approx(4.0));
    CHECK_FALSE(g.valid(1, 1));
    CHECK_FALSE(g.valid(2, 2));

    {
        std::ofstream out(csv);
        out << "1.0,oops\n";
    }
    CHECK_THROWS_AS(read_csv_grid(csv), std::runtime_error);
}
