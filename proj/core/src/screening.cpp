#include "surfmet/screening.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "surfmet/numerics.hpp"

namespace surfmet::screen {

double sample_mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("sample_mean: empty input");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
    if (v.size() < 2) throw std::invalid_argument("sample_sd: needs n >= 2");
    double m = sample_mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double quantile_linear(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile_linear: empty input");
    if (sorted.size() == 1) return sorted[0];
    double pos = p * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double sample_median(std::span<const double> v) {
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    return quantile_linear(s, 0.5);
}

namespace {

ChauvenetLimits limits_of(const std::vector<double>& vals) {
    double m = sample_mean(vals);
    double s = sample_sd(vals);
    double n = static_cast<double>(vals.size());
    double zstar = num::normal_quantile(1.0 - 1.0 / (4.0 * n));
    return {m - zstar * s, m + zstar * s};
}

}  // namespace

ChauvenetResult chauvenet(std::span<const double> values, int max_iterations) {
    if (values.size() < 4)
        throw std::invalid_argument("chauvenet: criterion needs n >= 4");
    if (max_iterations < 1)
        throw std::invalid_argument("chauvenet: max_iterations < 1");
    for (double v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("chauvenet: non-finite value");

    ChauvenetResult res;
    std::vector<std::size_t> alive(values.size());
    std::iota(alive.begin(), alive.end(), std::size_t{0});

    for (int it = 1; it <= max_iterations; ++it) {
        std::vector<double> cur;
        cur.reserve(alive.size());
        for (auto i : alive) cur.push_back(values[i]);
        ChauvenetLimits lim = limits_of(cur);
        res.limits.push_back(lim);
        res.iterations_run = it;

        std::vector<std::size_t> next;
        bool removed = false;
        for (auto i : alive) {
            if (values[i] < lim.lo || values[i] > lim.hi) {
                res.excluded.emplace_back(values[i], it);
                removed = true;
            } else {
                next.push_back(i);
            }
        }
        alive = std::move(next);
        if (alive.size() < 2)
            throw std::runtime_error("chauvenet: exclusion left fewer than 2 values");
        if (!removed) break;
    }

    res.kept_indices = alive;
    for (auto i : alive) res.kept.push_back(values[i]);
    res.final_limits = limits_of(res.kept);
    return res;
}

std::vector<double> chauvenet_replace_median(std::span<const double> values,
                                             int max_iterations,
                                             ChauvenetResult* detail) {
    ChauvenetResult res = chauvenet(values, max_iterations);
    double med = sample_median(res.kept);
    std::vector<bool> kept(values.size(), false);
    for (auto i : res.kept_indices) kept[i] = true;
    std::vector<double> out(values.begin(), values.end());
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!kept[i]) out[i] = med;
    if (detail) *detail = std::move(res);
    return out;
}

std::vector<Deviation> normalize_to_area_averages(
    const std::vector<MeasurementRecord>& records, bool include_reference_in_area_mean) {
    std::map<std::pair<std::string, Measurand>, std::pair<double, std::size_t>> sums;
    for (const auto& r : records) {
        if (r.instrument == Instrument::CI && !include_reference_in_area_mean) continue;
        auto& acc = sums[{r.area, r.measurand}];
        acc.first += r.value_um;
        acc.second += 1;
    }
    std::vector<Deviation> out;
    for (const auto& r : records) {
        if (r.instrument == Instrument::CI) continue;
        auto it = sums.find({r.area, r.measurand});
        if (it == sums.end() || it->second.second < 2)
            throw std::invalid_argument("normalize_to_area_averages: area group '" + r.area +
                                        "' has fewer than 2 values");
        double mean = it->second.first / static_cast<double>(it->second.second);
        Deviation d;
        d.record = r;
        d.record.value_um = r.value_um - mean;
        d.area_mean = mean;
        out.push_back(std::move(d));
    }
    return out;
}

HistogramSpec histogram(std::span<const double> values, BinRule rule, std::size_t bin_count) {
    if (values.size() < 2) throw std::invalid_argument("histogram: needs n >= 2");
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    const double lo = s.front(), hi = s.back();
    const auto n = s.size();

    HistogramSpec h;
    h.normal_mean = sample_mean(values);
    h.normal_sd = hi > lo ? sample_sd(values) : 0.0;

    if (hi <= lo) {
        h.degenerate = true;
        h.edges = {lo - 0.5, lo + 0.5};
        h.counts = {static_cast<long>(n)};
        return h;
    }

    std::size_t bins = bin_count;
    if (bins == 0) {
        if (rule == BinRule::Sturges) {
            bins = static_cast<std::size_t>(
                std::ceil(1.0 + std::log2(static_cast<double>(n))));
        } else {
            double iqr = quantile_linear(s, 0.75) - quantile_linear(s, 0.25);
            double w = 2.0 * iqr / std::cbrt(static_cast<double>(n));
            bins = w > 0.0 ? static_cast<std::size_t>(std::ceil((hi - lo) / w))
                           : static_cast<std::size_t>(std::ceil(std::sqrt(double(n))));
        }
    }
    bins = std::max<std::size_t>(bins, 1);

    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    for (double x : s) {
        auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
        if (b >= bins) b = bins - 1;  // right edge belongs to the last bin
        ++h.counts[b];
    }
    return h;
}

std::vector<NppPoint> npp_points(std::span<const double> values) {
    if (values.size() < 3) throw std::invalid_argument("npp_points: needs n >= 3");
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    std::vector<NppPoint> pts(s.size());
    const double n = static_cast<double>(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        pts[i].theoretical = num::normal_quantile((static_cast<double>(i) + 0.5) / n);
        pts[i].value = s[i];
    }
    return pts;
}

SampleStats boxplot_stats(std::span<const double> values) {
    if (values.size() < 4) throw std::invalid_argument("boxplot_stats: needs n >= 4");
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    SampleStats st;
    st.n = s.size();
    st.mean = sample_mean(values);
    st.sd = sample_sd(values);
    st.median = quantile_linear(s, 0.5);
    st.q1 = quantile_linear(s, 0.25);
    st.q3 = quantile_linear(s, 0.75);
    st.iqr = st.q3 - st.q1;
    st.min = s.front();
    st.max = s.back();
    return st;
}

}  // namespace surfmet::screen
