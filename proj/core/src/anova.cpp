#include "surfmet/anova.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "surfmet/numerics.hpp"

namespace surfmet::anova {

namespace {

struct Block {
    std::string factor;
    Eigen::MatrixXd cols;
    std::vector<std::string> level_names;  // per column
};

std::vector<Block> factor_blocks(const DesignMatrix& d) {
    std::vector<Block> blocks;
    const auto n = static_cast<long>(d.response.size());
    for (const auto& f : d.factors) {
        if (f.levels.size() != d.response.size())
            throw std::invalid_argument("anova: factor '" + f.name + "' length mismatch");
        std::vector<std::string> uniq;
        for (const auto& l : f.levels)
            if (std::find(uniq.begin(), uniq.end(), l) == uniq.end()) uniq.push_back(l);
        if (uniq.size() < 2)
            throw std::invalid_argument("anova: factor '" + f.name + "' has a single level");
        Block b;
        b.factor = f.name;
        b.cols.resize(n, static_cast<long>(uniq.size()) - 1);
        for (std::size_t j = 1; j < uniq.size(); ++j) {
            for (long i = 0; i < n; ++i)
                b.cols(i, static_cast<long>(j) - 1) = f.levels[i] == uniq[j] ? 1.0 : 0.0;
            b.level_names.push_back(f.name + "=" + uniq[j]);
        }
        blocks.push_back(std::move(b));
    }
    return blocks;
}

// Explained sum of squares and rank of span(X) via SVD, rank tolerance
// relative to the largest singular value.
std::pair<double, long> explained_ss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.cols() == 0) return {0.0, 0};
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
    double smax = svd.singularValues()(0);
    long rank = 0;
    for (long i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-9 * smax) ++rank;
    const auto& U = svd.matrixU();
    double ss = 0.0;
    for (long i = 0; i < rank; ++i) {
        double c = U.col(i).dot(y);
        ss += c * c;
    }
    return {ss, rank};
}

Eigen::MatrixXd hcat(const std::vector<const Eigen::MatrixXd*>& parts, long n) {
    long total = 0;
    for (auto* p : parts) total += p->cols();
    Eigen::MatrixXd X(n, total);
    long at = 0;
    for (auto* p : parts) {
        X.middleCols(at, p->cols()) = *p;
        at += p->cols();
    }
    return X;
}

}  // namespace

DesignMatrix encode_design(const std::vector<double>& response,
                           const std::vector<Factor>& factors) {
    if (response.empty()) throw std::invalid_argument("encode_design: empty response");
    DesignMatrix d;
    d.response = response;
    d.factors = factors;
    factor_blocks(d);  // validates level counts and lengths
    return d;
}

AnovaTable anova(const DesignMatrix& design, SumOfSquares ss_kind) {
    const auto n = static_cast<long>(design.response.size());
    Eigen::VectorXd y(n);
    for (long i = 0; i < n; ++i) y(i) = design.response[i];
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);

    auto blocks = factor_blocks(design);

    std::vector<const Eigen::MatrixXd*> all = {&ones};
    for (const auto& b : blocks) all.push_back(&b.cols);
    Eigen::MatrixXd Xfull = hcat(all, n);
    auto [ss_full, rank_full] = explained_ss(Xfull, y);

    const double ss_tot = y.squaredNorm();
    auto [ss_mean, rank_mean] = explained_ss(ones, y);
    const double sst_centered = ss_tot - ss_mean;
    const double ss_res = ss_tot - ss_full;
    const long dof_res = n - rank_full;
    if (dof_res < 1) throw std::invalid_argument("anova: residual dof < 1");
    const double ms_res = ss_res / static_cast<double>(dof_res);

    AnovaTable table;
    table.ss_kind = ss_kind;
    table.r2 = sst_centered > 0.0 ? 1.0 - ss_res / sst_centered : 0.0;

    // name aliased columns: a column is aliased when appending it to all
    // preceding columns does not increase the rank
    {
        Eigen::MatrixXd acc = ones;
        for (const auto& b : blocks) {
            for (long j = 0; j < b.cols.cols(); ++j) {
                Eigen::MatrixXd trial(n, acc.cols() + 1);
                trial << acc, b.cols.col(j);
                auto [ss_a, r_a] = explained_ss(acc, y);
                auto [ss_t, r_t] = explained_ss(trial, y);
                if (r_t == r_a)
                    table.aliased.push_back(b.level_names[static_cast<std::size_t>(j)]);
                acc = std::move(trial);
            }
        }
    }

    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        double ss = 0.0;
        long dof = 0;
        if (ss_kind == SumOfSquares::Sequential) {
            std::vector<const Eigen::MatrixXd*> prev = {&ones};
            for (std::size_t k = 0; k < bi; ++k) prev.push_back(&blocks[k].cols);
            auto cur = prev;
            cur.push_back(&blocks[bi].cols);
            auto [ss_p, r_p] = explained_ss(hcat(prev, n), y);
            auto [ss_c, r_c] = explained_ss(hcat(cur, n), y);
            ss = ss_c - ss_p;
            dof = r_c - r_p;
        } else {
            std::vector<const Eigen::MatrixXd*> others = {&ones};
            for (std::size_t k = 0; k < blocks.size(); ++k)
                if (k != bi) others.push_back(&blocks[k].cols);
            auto [ss_o, r_o] = explained_ss(hcat(others, n), y);
            ss = ss_full - ss_o;
            dof = rank_full - r_o;
        }
        AnovaRow row;
        row.factor = blocks[bi].factor;
        row.ss = std::max(ss, 0.0);
        row.dof = dof;
        if (dof > 0) {
            row.ms = row.ss / static_cast<double>(dof);
            row.f = row.ms / ms_res;
            row.p = num::f_sf(row.f, static_cast<double>(dof), static_cast<double>(dof_res));
        } else {
            row.ms = 0.0;
            row.f = std::numeric_limits<double>::quiet_NaN();
            row.p = std::numeric_limits<double>::quiet_NaN();
        }
        table.rows.push_back(std::move(row));
    }

    AnovaRow resid;
    resid.factor = "Residual";
    resid.ss = ss_res;
    resid.dof = dof_res;
    resid.ms = ms_res;
    resid.f = std::numeric_limits<double>::quiet_NaN();
    resid.p = std::numeric_limits<double>::quiet_NaN();
    table.rows.push_back(std::move(resid));
    return table;
}

}  // namespace surfmet::anova
