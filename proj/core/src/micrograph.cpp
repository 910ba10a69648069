#include "surfmet/micrograph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "surfmet/screening.hpp"

namespace surfmet::micro {

namespace {

std::vector<double> valid_heights(const Micrograph& m) {
    std::vector<double> v;
    v.reserve(m.heights.size());
    for (std::size_t i = 0; i < m.heights.size(); ++i)
        if (m.mask[i]) v.push_back(m.heights[i]);
    return v;
}

}  // namespace

Micrograph level_plane(const Micrograph& m) {
    m.validate();
    std::size_t nvalid = m.valid_count();
    if (nvalid < 3) throw std::invalid_argument("level_plane: needs at least 3 valid pixels");

    // normal equations of z = a + b x + c y over valid pixels
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, sz = 0, sxz = 0, syz = 0, n = 0;
    for (std::size_t iy = 0; iy < m.ny; ++iy)
        for (std::size_t ix = 0; ix < m.nx; ++ix) {
            if (!m.valid(ix, iy)) continue;
            double x = static_cast<double>(ix) * m.pixel_dx_um;
            double y = static_cast<double>(iy) * m.pixel_dy_um;
            double z = m.at(ix, iy);
            sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
            sz += z; sxz += x * z; syz += y * z; n += 1.0;
        }
    Eigen::Matrix3d A;
    A << n, sx, sy, sx, sxx, sxy, sy, sxy, syy;
    Eigen::Vector3d rhs(sz, sxz, syz);
    Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
    if (lu.rank() < 3)
        throw std::invalid_argument("level_plane: degenerate (collinear) pixel support");
    Eigen::Vector3d coef = lu.solve(rhs);

    Micrograph out = m;
    for (std::size_t iy = 0; iy < m.ny; ++iy)
        for (std::size_t ix = 0; ix < m.nx; ++ix) {
            double x = static_cast<double>(ix) * m.pixel_dx_um;
            double y = static_cast<double>(iy) * m.pixel_dy_um;
            out.at(ix, iy) = m.at(ix, iy) - (coef(0) + coef(1) * x + coef(2) * y);
        }
    return out;
}

double sq(const Micrograph& m) {
    auto v = valid_heights(m);
    if (v.size() < 2) throw std::invalid_argument("sq: needs at least 2 valid pixels");
    double mean = screen::sample_mean(v);
    double ss = 0.0;
    for (double z : v) ss += (z - mean) * (z - mean);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

double sa(const Micrograph& m) {
    auto v = valid_heights(m);
    if (v.size() < 2) throw std::invalid_argument("sa: needs at least 2 valid pixels");
    double mean = screen::sample_mean(v);
    double acc = 0.0;
    for (double z : v) acc += std::abs(z - mean);
    return acc / static_cast<double>(v.size());
}

StepHeightResult step_height_histogram(const Micrograph& m, const StepHeightOptions& opt) {
    auto v = valid_heights(m);
    if (v.size() < 4) throw std::invalid_argument("step_height_histogram: too few valid pixels");
    std::sort(v.begin(), v.end());
    const double lo = v.front(), hi = v.back();
    if (hi <= lo) throw std::invalid_argument("step_height_histogram: flat height map");

    double w = opt.bin_width_um;
    if (w <= 0.0) {
        double iqr = screen::quantile_linear(v, 0.75) - screen::quantile_linear(v, 0.25);
        w = 2.0 * iqr / std::cbrt(static_cast<double>(v.size()));
        if (w <= 0.0) w = (hi - lo) / std::sqrt(static_cast<double>(v.size()));
    }
    auto bins = static_cast<std::size_t>(std::ceil((hi - lo) / w));
    bins = std::clamp<std::size_t>(bins, 2, 1u << 16);
    w = (hi - lo) / static_cast<double>(bins);

    std::vector<double> count(bins, 0.0);
    for (double z : v) {
        auto b = static_cast<std::size_t>((z - lo) / (hi - lo) * static_cast<double>(bins));
        if (b >= bins) b = bins - 1;
        count[b] += 1.0;
    }

    // local maxima of the histogram (plateaus count once, at their start)
    struct Peak {
        std::size_t bin;
        double height;
    };
    std::vector<Peak> peaks;
    for (std::size_t b = 0; b < bins; ++b) {
        double l = b > 0 ? count[b - 1] : -1.0;
        double r = b + 1 < bins ? count[b + 1] : -1.0;
        if (count[b] > l && count[b] >= r && count[b] > 0.0) peaks.push_back({b, count[b]});
    }
    std::stable_sort(peaks.begin(), peaks.end(),
                     [](const Peak& a, const Peak& b) { return a.height > b.height; });

    const double dead_band = opt.dead_band_fraction * (hi - lo);
    auto center_of = [&](std::size_t b) { return lo + (static_cast<double>(b) + 0.5) * w; };

    // pick the two tallest peaks separated by at least the dead band
    StepHeightResult res;
    std::vector<Peak> chosen;
    for (const auto& p : peaks) {
        bool far_enough = true;
        for (const auto& c : chosen)
            if (std::abs(center_of(p.bin) - center_of(c.bin)) < dead_band) {
                far_enough = false;
                break;
            }
        if (far_enough) chosen.push_back(p);
    }
    res.modes_found = chosen.size();
    if (chosen.size() < 2)
        throw std::runtime_error("step_height_histogram: no step detected (unimodal histogram)");
    res.extra_modes_warning = chosen.size() > 2;

    auto refine = [&](std::size_t b) {
        // parabolic interpolation through the peak bin and its neighbours
        if (b == 0 || b + 1 >= bins) return center_of(b);
        double y0 = count[b - 1], y1 = count[b], y2 = count[b + 1];
        double denom = y0 - 2.0 * y1 + y2;
        if (denom >= 0.0) return center_of(b);
        double delta = 0.5 * (y0 - y2) / denom;
        return center_of(b) + delta * w;
    };
    double p1 = refine(chosen[0].bin);
    double p2 = refine(chosen[1].bin);
    res.level_low = std::min(p1, p2);
    res.level_high = std::max(p1, p2);
    res.height_um = res.level_high - res.level_low;
    return res;
}

Micrograph equalize(const Micrograph& m, std::size_t target_nx, std::size_t target_ny,
                    double target_dx_um, double target_dy_um) {
    m.validate();
    if (target_nx < 2 || target_ny < 2 || target_dx_um <= 0.0 || target_dy_um <= 0.0)
        throw std::invalid_argument("equalize: bad target grid");
    const double src_w = static_cast<double>(m.nx - 1) * m.pixel_dx_um;
    const double src_h = static_cast<double>(m.ny - 1) * m.pixel_dy_um;
    const double dst_w = static_cast<double>(target_nx - 1) * target_dx_um;
    const double dst_h = static_cast<double>(target_ny - 1) * target_dy_um;
    if (dst_w > src_w * (1.0 + 1e-12) || dst_h > src_h * (1.0 + 1e-12))
        throw std::invalid_argument("equalize: target grid exceeds the source extent");

    Micrograph out = make_micrograph(target_nx, target_ny, target_dx_um, target_dy_um);
    for (std::size_t iy = 0; iy < target_ny; ++iy)
        for (std::size_t ix = 0; ix < target_nx; ++ix) {
            const double x = static_cast<double>(ix) * target_dx_um / m.pixel_dx_um;
            const double y = static_cast<double>(iy) * target_dy_um / m.pixel_dy_um;
            auto x0 = static_cast<std::size_t>(std::floor(x));
            auto y0 = static_cast<std::size_t>(std::floor(y));
            if (x0 >= m.nx - 1) x0 = m.nx - 2;
            if (y0 >= m.ny - 1) y0 = m.ny - 2;
            const double fx = x - static_cast<double>(x0);
            const double fy = y - static_cast<double>(y0);
            const bool ok = m.valid(x0, y0) && m.valid(x0 + 1, y0) && m.valid(x0, y0 + 1) &&
                            m.valid(x0 + 1, y0 + 1);
            if (!ok) {
                out.mask[iy * target_nx + ix] = 0;
                out.at(ix, iy) = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            const double z = (1.0 - fx) * (1.0 - fy) * m.at(x0, y0) +
                             fx * (1.0 - fy) * m.at(x0 + 1, y0) +
                             (1.0 - fx) * fy * m.at(x0, y0 + 1) +
                             fx * fy * m.at(x0 + 1, y0 + 1);
            out.at(ix, iy) = z;
        }
    return out;
}

namespace {

CorrelationMatrix correlate_columns(const std::vector<std::vector<double>>& obs,
                                    const std::vector<std::vector<std::uint8_t>>& ok) {
    const std::size_t W = obs.size();
    CorrelationMatrix cm;
    cm.size = W;
    cm.rho.assign(W * W, 0.0);
    cm.defined.assign(W * W, 1);

    std::vector<std::uint8_t> col_ok(W, 1);
    for (std::size_t j = 0; j < W; ++j) {
        double mn = 0.0, ct = 0.0;
        for (std::size_t r = 0; r < obs[j].size(); ++r)
            if (ok[j][r]) {
                mn += obs[j][r];
                ct += 1.0;
            }
        if (ct < 2.0) {
            col_ok[j] = 0;
            continue;
        }
        mn /= ct;
        double var = 0.0;
        for (std::size_t r = 0; r < obs[j].size(); ++r)
            if (ok[j][r]) var += (obs[j][r] - mn) * (obs[j][r] - mn);
        if (var <= 0.0) col_ok[j] = 0;
    }

    for (std::size_t i = 0; i < W; ++i)
        for (std::size_t j = i; j < W; ++j) {
            if (!col_ok[i] || !col_ok[j]) {
                cm.defined[i * W + j] = cm.defined[j * W + i] = 0;
                cm.rho[i * W + j] = cm.rho[j * W + i] =
                    std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, n = 0;
            for (std::size_t r = 0; r < obs[i].size(); ++r) {
                if (!ok[i][r] || !ok[j][r]) continue;
                double a = obs[i][r], b = obs[j][r];
                sx += a; sy += b; sxx += a * a; syy += b * b; sxy += a * b; n += 1.0;
            }
            double vx = sxx - sx * sx / n;
            double vy = syy - sy * sy / n;
            double cxy = sxy - sx * sy / n;
            double rho;
            if (i == j) {
                rho = 1.0;
            } else if (vx <= 0.0 || vy <= 0.0 || n < 2.0) {
                cm.defined[i * W + j] = cm.defined[j * W + i] = 0;
                cm.rho[i * W + j] = cm.rho[j * W + i] =
                    std::numeric_limits<double>::quiet_NaN();
                continue;
            } else {
                rho = cxy / std::sqrt(vx * vy);
                rho = std::clamp(rho, -1.0, 1.0);
            }
            cm.rho[i * W + j] = cm.rho[j * W + i] = rho;
        }
    return cm;
}

}  // namespace

CorrelationMatrix pixel_correlation(const Micrograph& m, std::size_t window,
                                    CorrelationMode mode) {
    m.validate();
    if (mode == CorrelationMode::StacksAsObservations)
        throw std::invalid_argument(
            "pixel_correlation: stack mode needs the stack overload");
    if (m.ny < 2) throw std::invalid_argument("pixel_correlation: needs at least 2 rows");
    window = std::min(window == 0 ? m.nx : window, m.nx);
    const std::size_t j0 = (m.nx - window) / 2;

    std::vector<std::vector<double>> obs(window, std::vector<double>(m.ny));
    std::vector<std::vector<std::uint8_t>> ok(window, std::vector<std::uint8_t>(m.ny));
    for (std::size_t j = 0; j < window; ++j)
        for (std::size_t r = 0; r < m.ny; ++r) {
            obs[j][r] = m.at(j0 + j, r);
            ok[j][r] = m.valid(j0 + j, r);
        }
    return correlate_columns(obs, ok);
}

CorrelationMatrix pixel_correlation(const std::vector<Micrograph>& stack, std::size_t window) {
    if (stack.size() < 2)
        throw std::invalid_argument("pixel_correlation: stack needs >= 2 micrographs");
    const auto& first = stack.front();
    for (const auto& m : stack)
        if (m.nx != first.nx || m.ny != first.ny)
            throw std::invalid_argument("pixel_correlation: stack grids differ");
    window = std::min(window == 0 ? first.nx : window, first.nx);
    const std::size_t j0 = (first.nx - window) / 2;
    const std::size_t row = first.ny / 2;  // central row's pixels as variables

    std::vector<std::vector<double>> obs(window, std::vector<double>(stack.size()));
    std::vector<std::vector<std::uint8_t>> ok(window, std::vector<std::uint8_t>(stack.size()));
    for (std::size_t j = 0; j < window; ++j)
        for (std::size_t r = 0; r < stack.size(); ++r) {
            obs[j][r] = stack[r].at(j0 + j, row);
            ok[j][r] = stack[r].valid(j0 + j, row);
        }
    return correlate_columns(obs, ok);
}

FillResult interpolate_nonmeasured(const Micrograph& m, FillPolicy policy) {
    m.validate();
    if (m.valid_count() == 0)
        throw std::invalid_argument("interpolate_nonmeasured: no valid pixels");
    FillResult res;
    res.filled = m;
    res.provenance.assign(m.heights.size(), 0);
    if (policy == FillPolicy::MaskOnly) return res;

    // multi-source BFS from all valid pixels; holes take the value of the
    // nearest (grid-distance) valid pixel, scan order breaking ties
    std::deque<std::size_t> queue;
    std::vector<std::int64_t> source(m.heights.size(), -1);
    for (std::size_t i = 0; i < m.heights.size(); ++i)
        if (m.mask[i]) {
            source[i] = static_cast<std::int64_t>(i);
            queue.push_back(i);
        }
    const auto nx = static_cast<std::int64_t>(m.nx);
    const auto ny = static_cast<std::int64_t>(m.ny);
    const std::int64_t dx[4] = {1, -1, 0, 0};
    const std::int64_t dy[4] = {0, 0, 1, -1};
    while (!queue.empty()) {
        std::size_t cur = queue.front();
        queue.pop_front();
        auto cx = static_cast<std::int64_t>(cur % m.nx);
        auto cy = static_cast<std::int64_t>(cur / m.nx);
        for (int d = 0; d < 4; ++d) {
            std::int64_t px = cx + dx[d], py = cy + dy[d];
            if (px < 0 || px >= nx || py < 0 || py >= ny) continue;
            auto idx = static_cast<std::size_t>(py * nx + px);
            if (source[idx] >= 0) continue;
            source[idx] = source[cur];
            queue.push_back(idx);
        }
    }
    for (std::size_t i = 0; i < m.heights.size(); ++i)
        if (!m.mask[i]) {
            res.filled.heights[i] = m.heights[static_cast<std::size_t>(source[i])];
            res.filled.mask[i] = 1;
            res.provenance[i] = 1;
        }
    return res;
}

}  // namespace surfmet::micro
