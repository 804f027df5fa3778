#ifndef APERC_STATS_HPP
#define APERC_STATS_HPP

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace aperc {

/// Welford accumulator.
class RunningStats {
public:
    void add(double x) noexcept
    {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }

    void merge(const RunningStats& o) noexcept
    {
        if (o.n_ == 0)
            return;
        const double total = static_cast<double>(n_ + o.n_);
        const double d = o.mean_ - mean_;
        mean_ += d * static_cast<double>(o.n_) / total;
        m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / total;
        n_ += o.n_;
    }

    std::int64_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double stderr_mean() const noexcept { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

private:
    std::int64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// A Monte Carlo estimate: every emitted number carries its error and
/// replicate count.
struct Estimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::int64_t reps = 0;
};

inline Estimate proportion(std::int64_t hits, std::int64_t reps)
{
    if (reps <= 0)
        return {};
    const double p = static_cast<double>(hits) / static_cast<double>(reps);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(reps)), reps};
}

struct ChiSquareResult {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

/// Pearson goodness of fit of observed counts against an exact pmf.
/// Adjacent cells are pooled left to right until each pooled cell has
/// expected count >= min_expected; the tail cell absorbs the remainder.
inline ChiSquareResult chi_square_gof(std::span<const std::int64_t> observed, std::span<const double> pmf,
    double min_expected = 5.0)
{
    if (observed.size() != pmf.size())
        throw std::invalid_argument("chi_square_gof: size mismatch");
    std::int64_t total = 0;
    for (auto o : observed)
        total += o;
    const auto n = static_cast<double>(total);

    std::vector<double> exp_cells;
    std::vector<double> obs_cells;
    double e_acc = 0.0;
    double o_acc = 0.0;
    for (std::size_t k = 0; k < pmf.size(); ++k) {
        e_acc += pmf[k] * n;
        o_acc += static_cast<double>(observed[k]);
        if (e_acc >= min_expected) {
            exp_cells.push_back(e_acc);
            obs_cells.push_back(o_acc);
            e_acc = 0.0;
            o_acc = 0.0;
        }
    }
    if (e_acc > 0.0 || o_acc > 0.0) {
        if (exp_cells.empty()) {
            exp_cells.push_back(e_acc);
            obs_cells.push_back(o_acc);
        } else {
            exp_cells.back() += e_acc;
            obs_cells.back() += o_acc;
        }
    }

    ChiSquareResult r;
    for (std::size_t i = 0; i < exp_cells.size(); ++i) {
        const double d = obs_cells[i] - exp_cells[i];
        r.statistic += d * d / exp_cells[i];
    }
    r.dof = static_cast<int>(exp_cells.size()) - 1;
    if (r.dof >= 1) {
        boost::math::chi_squared dist(r.dof);
        r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
    }
    return r;
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
};

/// Weighted least squares y = a + b x; weights are inverse variances.
inline LinearFit weighted_fit(std::span<const double> x, std::span<const double> y, std::span<const double> w)
{
    if (x.size() != y.size() || x.size() != w.size() || x.size() < 2)
        throw std::invalid_argument("weighted_fit: need at least two matching points");
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
        sxx += w[i] * x[i] * x[i];
        sxy += w[i] * x[i] * y[i];
    }
    const double det = sw * sxx - sx * sx;
    LinearFit f;
    f.slope = (sw * sxy - sx * sy) / det;
    f.intercept = (sxx * sy - sx * sxy) / det;
    f.slope_stderr = std::sqrt(sw / det);
    return f;
}

} // namespace aperc

#endif // APERC_STATS_HPP
