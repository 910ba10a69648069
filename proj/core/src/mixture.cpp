#include "surfmet/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "surfmet/numerics.hpp"

namespace surfmet::mix {

namespace {

constexpr double kPenalty = 1e9;

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct Objective {
    std::vector<double> edges;
    std::vector<double> counts;                       // original bins
    std::vector<std::pair<std::size_t, std::size_t>> groups;  // pooled ranges
    double n = 0.0;
    int k = 0;
    double mu_lo = 0.0, mu_hi = 0.0;
    double sigma_floor = 0.0, sigma_cap = 0.0;

    // theta = [mu_0..mu_{k-1}, log sigma_0.., logit w_0..w_{k-2}]
    void unpack(std::span<const double> th, std::vector<double>& mu, std::vector<double>& sg,
                std::vector<double>& w) const {
        mu.assign(th.begin(), th.begin() + k);
        sg.resize(k);
        for (int i = 0; i < k; ++i) sg[i] = std::exp(th[k + i]);
        w.assign(k, 1.0);
        if (k > 1) {
            double mx = 0.0;
            for (int i = 0; i + 1 < k; ++i) mx = std::max(mx, th[2 * k + i]);
            double sum = std::exp(0.0 - mx);
            w[k - 1] = sum;
            for (int i = 0; i + 1 < k; ++i) {
                w[i] = std::exp(th[2 * k + i] - mx);
                sum += w[i];
            }
            for (int i = 0; i < k; ++i) w[i] /= sum;
        }
    }

    std::vector<double> expected(const std::vector<double>& mu, const std::vector<double>& sg,
                                 const std::vector<double>& w) const {
        std::vector<double> cdf(edges.size(), 0.0);
        for (int i = 0; i < k; ++i)
            for (std::size_t e = 0; e < edges.size(); ++e)
                cdf[e] += w[i] * num::normal_cdf((edges[e] - mu[i]) / sg[i]);
        std::vector<double> ex(edges.size() - 1);
        for (std::size_t b = 0; b + 1 < edges.size(); ++b) ex[b] = n * (cdf[b + 1] - cdf[b]);
        return ex;
    }

    double chi2(const std::vector<double>& mu, const std::vector<double>& sg,
                const std::vector<double>& w) const {
        auto ex = expected(mu, sg, w);
        double s = 0.0;
        for (auto [b0, b1] : groups) {
            double O = 0.0, E = 0.0;
            for (std::size_t b = b0; b < b1; ++b) {
                O += counts[b];
                E += ex[b];
            }
            if (E <= 1e-12) return kPenalty * 1e3;
            s += (O - E) * (O - E) / E;
        }
        return s;
    }

    double operator()(std::span<const double> th) const {
        std::vector<double> mu, sg, w;
        unpack(th, mu, sg, w);
        for (int i = 0; i < k; ++i) {
            if (!(mu[i] >= mu_lo && mu[i] <= mu_hi)) return kPenalty;
            if (!(sg[i] >= sigma_floor && sg[i] <= sigma_cap)) return kPenalty;
        }
        for (std::size_t i = 2 * static_cast<std::size_t>(k); i < th.size(); ++i)
            if (std::abs(th[i]) > 12.0) return kPenalty;
        return chi2(mu, sg, w);
    }
};

// Standard Nelder-Mead with fixed coefficients; deterministic given the
// starting point.
std::vector<double> nelder_mead(const Objective& f, std::vector<double> x0, int max_iter,
                                double* fmin_out) {
    const std::size_t d = x0.size();
    const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
    std::vector<std::vector<double>> simplex(d + 1, x0);
    for (std::size_t i = 0; i < d; ++i)
        simplex[i + 1][i] += (std::abs(x0[i]) > 1e-8 ? 0.15 * std::abs(x0[i]) : 0.1);
    std::vector<double> fv(d + 1);
    for (std::size_t i = 0; i <= d; ++i) fv[i] = f(simplex[i]);

    std::vector<std::size_t> idx(d + 1);
    for (int it = 0; it < max_iter; ++it) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
        if (fv[idx[d]] - fv[idx[0]] < 1e-10 * (1.0 + std::abs(fv[idx[0]]))) break;

        std::vector<double> centroid(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) centroid[j] += simplex[idx[i]][j];
        for (auto& c : centroid) c /= static_cast<double>(d);

        auto blend = [&](double coef) {
            std::vector<double> p(d);
            for (std::size_t j = 0; j < d; ++j)
                p[j] = centroid[j] + coef * (simplex[idx[d]][j] - centroid[j]);
            return p;
        };
        auto refl = blend(-alpha);
        double fr = f(refl);
        if (fr < fv[idx[0]]) {
            auto exp_p = blend(-alpha * gamma);
            double fe = f(exp_p);
            if (fe < fr) {
                simplex[idx[d]] = exp_p;
                fv[idx[d]] = fe;
            } else {
                simplex[idx[d]] = refl;
                fv[idx[d]] = fr;
            }
            continue;
        }
        if (fr < fv[idx[d - 1]]) {
            simplex[idx[d]] = refl;
            fv[idx[d]] = fr;
            continue;
        }
        auto contr = blend(fr < fv[idx[d]] ? -alpha * rho : rho);
        double fc = f(contr);
        if (fc < std::min(fr, fv[idx[d]])) {
            simplex[idx[d]] = contr;
            fv[idx[d]] = fc;
            continue;
        }
        for (std::size_t i = 1; i <= d; ++i) {
            for (std::size_t j = 0; j < d; ++j)
                simplex[idx[i]][j] =
                    simplex[idx[0]][j] + sigma * (simplex[idx[i]][j] - simplex[idx[0]][j]);
            fv[idx[i]] = f(simplex[idx[i]]);
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i <= d; ++i)
        if (fv[i] < fv[best]) best = i;
    if (fmin_out) *fmin_out = fv[best];
    return simplex[best];
}

Objective make_objective(std::span<const double> values, const HistogramSpec& h, int k,
                         double sigma_floor_factor, double pool_min_count = 1.0) {
    Objective f;
    f.edges = h.edges;
    f.counts.assign(h.counts.begin(), h.counts.end());
    f.n = static_cast<double>(values.size());
    f.k = k;
    const double binw = h.bin_width();
    double lo = h.edges.front(), hi = h.edges.back();
    f.mu_lo = lo - binw;
    f.mu_hi = hi + binw;
    f.sigma_floor = sigma_floor_factor * binw;
    f.sigma_cap = std::max(hi - lo, f.sigma_floor * 2.0);
    // pool adjacent bins until each group holds at least one observation;
    // pooling from the observed counts keeps the partition fixed, so the
    // optimizer cannot collapse the statistic by starving bins
    std::size_t i = 0;
    const std::size_t B = f.counts.size();
    while (i < B) {
        std::size_t j = i + 1;
        double c = f.counts[i];
        while (c < pool_min_count && j < B) c += f.counts[j++];
        f.groups.emplace_back(i, j);
        i = j;
    }
    if (f.groups.size() >= 2) {
        auto [l0, l1] = f.groups.back();
        double c = 0.0;
        for (std::size_t b = l0; b < l1; ++b) c += f.counts[b];
        if (c < pool_min_count) {
            auto [p0, p1] = f.groups[f.groups.size() - 2];
            f.groups.pop_back();
            f.groups.back() = {p0, l1};
        }
    }
    return f;
}

}  // namespace

KernelDistribution kernel_distribution(std::span<const double> values, std::size_t grid_points) {
    if (values.size() < 5)
        throw std::invalid_argument("kernel_distribution: needs n >= 5");
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    const double sd = screen::sample_sd(values);
    if (sd <= 0.0) throw std::invalid_argument("kernel_distribution: zero variance");
    const double iqr =
        screen::quantile_linear(s, 0.75) - screen::quantile_linear(s, 0.25);
    double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    const double n = static_cast<double>(values.size());
    const double h = 0.9 * spread * std::pow(n, -0.2);

    KernelDistribution kd;
    kd.bandwidth = h;
    const double lo = s.front() - 3.0 * h, hi = s.back() + 3.0 * h;
    kd.grid.resize(grid_points);
    kd.density.resize(grid_points);
    for (std::size_t g = 0; g < grid_points; ++g) {
        double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_points - 1);
        kd.grid[g] = x;
        double acc = 0.0;
        for (double v : s) acc += num::normal_pdf((x - v) / h);
        kd.density[g] = acc / (n * h);
    }
    return kd;
}

double mixture_chi2(std::span<const double> values, const std::vector<MixtureKernel>& kernels,
                    std::size_t bin_count) {
    auto h = screen::histogram(values, screen::BinRule::Sturges, bin_count);
    auto f = make_objective(values, h, static_cast<int>(kernels.size()), 0.0);
    std::vector<double> mu, sg, w;
    for (const auto& kk : kernels) {
        mu.push_back(kk.mean);
        sg.push_back(kk.sd);
        w.push_back(kk.weight);
    }
    return f.chi2(mu, sg, w);
}

MixtureModel fit_mixture(std::span<const double> values, const MixtureConfig& cfg) {
    if (cfg.k < 1) throw std::invalid_argument("fit_mixture: k < 1");
    if (values.size() < 5) throw std::invalid_argument("fit_mixture: needs n >= 5");
    auto h = screen::histogram(values, screen::BinRule::Sturges, cfg.bin_count);
    if (h.degenerate) throw std::invalid_argument("fit_mixture: zero-variance sample");
    std::size_t occupied = 0;
    for (auto c : h.counts)
        if (c > 0) ++occupied;
    if (static_cast<std::size_t>(cfg.k) > occupied)
        throw std::invalid_argument("fit_mixture: k exceeds occupied histogram bins");

    Objective f = make_objective(values, h, cfg.k, cfg.sigma_floor_factor, cfg.pool_min_count);

    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    const double sd = screen::sample_sd(values);
    const int k = cfg.k;
    const std::size_t dim = static_cast<std::size_t>(2 * k + (k - 1));

    auto clamp_sigma = [&](double x) {
        return std::clamp(x, f.sigma_floor * 1.05, f.sigma_cap * 0.95);
    };

    std::vector<std::vector<double>> starts;
    {
        // canonical start: quantile-spaced means, pooled sd, uniform weights
        std::vector<double> th(dim, 0.0);
        for (int i = 0; i < k; ++i) {
            th[i] = screen::quantile_linear(s, (i + 0.5) / static_cast<double>(k));
            th[k + i] = std::log(clamp_sigma(sd / std::sqrt(static_cast<double>(k))));
        }
        starts.push_back(th);
    }
    std::mt19937_64 rng(cfg.seed);
    for (int r = 1; r < cfg.restarts; ++r) {
        std::vector<double> th(dim, 0.0);
        std::vector<double> mus(k);
        for (auto& m : mus) m = s.front() + (s.back() - s.front()) * uniform01(rng);
        std::sort(mus.begin(), mus.end());
        for (int i = 0; i < k; ++i) {
            th[i] = mus[i];
            th[k + i] = std::log(clamp_sigma(sd * (0.2 + uniform01(rng))));
        }
        for (int i = 0; i + 1 < k; ++i) th[2 * k + i] = 3.0 * (uniform01(rng) - 0.5);
        starts.push_back(th);
    }

    double best_f = std::numeric_limits<double>::infinity();
    std::vector<double> best_x;
    bool converged = false;
    for (const auto& st : starts) {
        double fx = 0.0;
        auto x = nelder_mead(f, st, cfg.max_iterations, &fx);
        if (fx < best_f) {
            best_f = fx;
            best_x = x;
        }
    }
    // polish: restart the simplex at the winner until it stops improving
    for (int round = 0; round < 4; ++round) {
        double fx = 0.0;
        auto x = nelder_mead(f, best_x, cfg.max_iterations, &fx);
        if (fx >= best_f - 1e-12 * (1.0 + std::abs(best_f))) break;
        best_f = fx;
        best_x = x;
    }
    if (best_f >= kPenalty)
        throw std::runtime_error("fit_mixture: no feasible start converged");
    converged = best_f < kPenalty;

    std::vector<double> mu, sg, w;
    f.unpack(best_x, mu, sg, w);
    MixtureModel model;
    model.histogram = h;
    model.chi2 = best_f;
    model.converged = converged;
    std::vector<std::size_t> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return w[a] > w[b]; });
    for (auto i : order) model.kernels.push_back({mu[i], sg[i], w[i]});
    return model;
}

std::vector<KernelAssignment> assign_kernels_to_factors(
    const MixtureModel& model, const std::vector<MeasurementRecord>& records,
    const std::string& factor) {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& r : records) {
        std::string level;
        if (factor == "day")
            level = r.day ? "day " + std::to_string(*r.day) : "unknown";
        else if (factor == "magnification")
            level = r.magnification
                        ? std::to_string(static_cast<long>(*r.magnification)) + "x"
                        : "unknown";
        else if (factor == "instrument")
            level = to_string(r.instrument);
        else if (factor == "area")
            level = r.area;
        else
            throw std::invalid_argument("assign_kernels_to_factors: unknown factor '" + factor +
                                        "'");
        auto& acc = sums[level];
        acc.first += r.value_um;
        acc.second += 1;
    }
    if (sums.size() < model.kernels.size())
        throw std::invalid_argument(
            "assign_kernels_to_factors: fewer factor levels than kernels");

    std::vector<KernelAssignment> out;
    for (std::size_t ki = 0; ki < model.kernels.size(); ++ki) {
        double best = std::numeric_limits<double>::infinity();
        double second = best;
        KernelAssignment a;
        a.kernel = ki;
        for (const auto& [level, acc] : sums) {
            double mean = acc.first / static_cast<double>(acc.second);
            double d = std::abs(mean - model.kernels[ki].mean);
            if (d < best) {
                second = best;
                best = d;
                a.level = level;
                a.subgroup_mean = mean;
            } else if (d < second) {
                second = d;
            }
        }
        a.tie = std::isfinite(second) && second - best <= 1e-12 * (1.0 + std::abs(best));
        out.push_back(std::move(a));
    }
    return out;
}

}  // namespace surfmet::mix
